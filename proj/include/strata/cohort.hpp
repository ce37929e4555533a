#pragma once

// Cohort extraction: ID triples, the linear-time sorted merge join used to
// attach per-variable extract files to the ID list, lexicon-based
// detection of treatment-naive patients and the extract/intersect/filter
// pipeline with attrition accounting.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "strata/csv.hpp"
#include "strata/error.hpp"

namespace strata::cohort {

struct PatientKey {
  std::int64_t subject_id = 0;
  std::int64_t hadm_id = 0;
  std::int64_t icustay_id = 0;

  auto operator<=>(const PatientKey&) const = default;

  bool valid() const { return subject_id > 0 && hadm_id > 0 && icustay_id > 0; }
  std::string to_string() const {
    return fmt::format("({},{},{})", subject_id, hadm_id, icustay_id);
  }
};

/// Builds a key, throwing DataError("InvalidKey") unless all parts are positive.
PatientKey make_key(std::int64_t subject_id, std::int64_t hadm_id, std::int64_t icustay_id);

enum class KeyComponent { kSubject, kHadm, kIcustay };

inline std::int64_t component(const PatientKey& key, KeyComponent which) {
  switch (which) {
    case KeyComponent::kSubject: return key.subject_id;
    case KeyComponent::kHadm: return key.hadm_id;
    case KeyComponent::kIcustay: return key.icustay_id;
  }
  return 0;
}

std::string_view component_column(KeyComponent which);

/// Thrown when a join input is not ascending in the join component.
class UnsortedInput : public DataError {
 public:
  UnsortedInput(std::string input, std::size_t index)
      : DataError("UnsortedInput",
                  fmt::format("{} element {} is smaller than its predecessor", input, index)),
        input_(std::move(input)),
        index_(index) {}

  const std::string& input() const noexcept { return input_; }
  /// Zero-based position of the offending element within its input.
  std::size_t index() const noexcept { return index_; }

 private:
  std::string input_;
  std::size_t index_;
};

template <class Payload>
struct JoinGroup {
  PatientKey key;
  /// nullopt marks an id with no matching value rows.
  std::optional<std::vector<Payload>> rows;
};

struct JoinStats {
  std::size_t id_advances = 0;
  std::size_t value_advances = 0;
  std::size_t total() const { return id_advances + value_advances; }
};

/// Merges an id list with a value list, both ascending in `by`. Every
/// element of each input is visited at most once. Ids sharing the same join
/// component (e.g. two ICU stays of one admission) share the matched rows.
template <class Payload>
std::vector<JoinGroup<Payload>> sorted_merge_join(
    std::span<const PatientKey> ids, KeyComponent by,
    std::span<const std::pair<std::int64_t, Payload>> values, JoinStats* stats = nullptr) {
  std::vector<JoinGroup<Payload>> out;
  out.reserve(ids.size());
  JoinStats local;
  std::size_t j = 0;
  for (std::size_t i = 0; i < ids.size(); ++i, ++local.id_advances) {
    const std::int64_t id = component(ids[i], by);
    if (i > 0) {
      const std::int64_t prev = component(ids[i - 1], by);
      if (id < prev) throw UnsortedInput("ids", i);
      if (id == prev) {
        out.push_back({ids[i], out.back().rows});
        continue;
      }
    }
    std::vector<Payload> matched;
    while (j < values.size()) {
      if (j > 0 && values[j].first < values[j - 1].first) throw UnsortedInput("values", j);
      if (values[j].first > id) break;
      if (values[j].first == id) matched.push_back(values[j].second);
      ++j;
      ++local.value_advances;
    }
    JoinGroup<Payload> group{ids[i], std::nullopt};
    if (!matched.empty()) group.rows = std::move(matched);
    out.push_back(std::move(group));
  }
  if (stats) *stats = local;
  return out;
}

class DrugLexicon {
 public:
  /// Entries are lower-cased and trimmed; throws ConfigError when empty.
  explicit DrugLexicon(const std::vector<std::string>& entries);

  /// Diuretics with generic and brand names.
  static DrugLexicon defaults();

  const std::set<std::string>& entries() const { return entries_; }

 private:
  std::set<std::string> entries_;
};

struct NaiveConfig {
  /// Section labels that introduce pre-admission medication lists.
  std::vector<std::string> headings{"DRUGS ON ADMISSION", "ON ADMISSION",
                                    "MEDICATIONS ON ADMISSION"};
};

/// True when no lexicon drug is mentioned in any pre-admission section.
/// If the summary has no recognised pre-admission heading the whole text is
/// searched. Matching is case-insensitive on letter/digit token boundaries.
bool detect_naive(std::string_view summary, const DrugLexicon& lexicon,
                  const NaiveConfig& config = {});

// ---------------------------------------------------------------------------
// Filter pipeline

enum class StepKind { kExtract, kIntersect, kFilter };

std::string_view to_string(StepKind kind);

struct FilterStep {
  int index = 0;
  StepKind kind = StepKind::kExtract;
  std::string name;                     // result set name
  std::string label;                    // free text shown in the trace
  std::string source;                   // extract: source table name
  std::vector<std::string> inputs;      // intersect: two sets, filter: one set
  std::vector<std::string> predicates;  // conjunction, extract/filter only
};

struct PipelineSpec {
  std::string universe;  // table whose row count is the "original" denominator
  std::vector<FilterStep> steps;
};

/// Parses the line-oriented pipeline description:
///   universe <table>
///   <i> extract <set> <table> <pred>... [| label]
///   <i> intersect <set> <left> <right> [| label]
///   <i> filter <set> <input> <pred>... [| label]
PipelineSpec parse_pipeline(std::string_view text);
PipelineSpec read_pipeline(const std::filesystem::path& path);

/// The 16-step extraction used for the study group.
std::string default_pipeline_text();

struct Record {
  std::optional<PatientKey> key;  // absent when any id column is null
  std::size_t row = 0;            // row within the source table
};

struct RecordSet {
  std::string source;
  std::vector<Record> records;
};

struct TraceRow {
  int index = 0;
  StepKind kind = StepKind::kExtract;
  std::string name;
  std::string label;
  std::size_t surviving = 0;
  double pct_of_original = 0.0;
  double pct_of_previous = 0.0;
};

using FilterTrace = std::vector<TraceRow>;

/// Raw extracts addressed by table name (file stem).
struct Extracts {
  std::map<std::string, csv::Table, std::less<>> tables;

  const csv::Table& table(std::string_view name) const;
  static Extracts load_dir(const std::filesystem::path& dir);
};

struct PipelineOptions {
  DrugLexicon lexicon = DrugLexicon::defaults();
  NaiveConfig naive;
  std::string summaries_table = "summaries";
};

struct PipelineResult {
  std::vector<PatientKey> final_keys;  // sorted
  FilterTrace trace;
};

/// Runs the steps in order. Errors: UnknownSetReference, PredicateFailure
/// (names the PatientKey of the offending record), UnknownPredicate.
PipelineResult run_filter_pipeline(const Extracts& extracts, const PipelineSpec& spec,
                                   const PipelineOptions& options = {});

/// Matches each key against a table keyed by icustay_id, hadm_id or
/// subject_id (first present, in that order) using the sorted merge join.
/// Returns matched row indices per key, in key order. The table must be
/// ascending in its key column.
std::vector<std::vector<std::size_t>> attach_rows(std::span<const PatientKey> keys,
                                                  const csv::Table& table,
                                                  std::string_view table_name);

csv::Table trace_table(const FilterTrace& trace);
csv::Table keys_table(const std::vector<PatientKey>& keys);
std::vector<PatientKey> keys_from_table(const csv::Table& table);

}  // namespace strata::cohort
