#pragma once

// Variable preparation: irregular timelines are downsampled to one value
// per ICU day, the decision timepoints are fixed, and each patient becomes
// one row of the 58 study variables x1..x58.
//
// Layout of a row (1-based variable ids):
//   x1 treatment, x2 age, x3 gender, x4 race,
//   x5..x9   SAPS    (avg day1..T1, day1, T1, T2, T3)
//   x10..x14 SOFA    (same recipe)
//   x15      Elixhauser overall, x16..x24 Elixhauser flags
//   x25..x29 creatinine
//   x30..x34 fluid inputs  (avg of daily sums day1..T1, day1, T1, T2, T3)
//   x35..x39 fluid outputs
//   x40..x44 fluid balance (inputs - outputs)
//   x45 vasopressors, x46 ventilation
//   x47..x51 arterial BP, x52..x56 mean arterial BP
//   x57 30-day mortality, x58 ICU length of stay after T1 (days)
// Binary variables use -1/+1.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strata/cohort.hpp"
#include "strata/csv.hpp"

namespace strata::varprep {

using Day = int;

/// ICU day containing an offset: day d covers [24(d-1), 24d) hours.
Day day_of_offset(double offset_hours);

struct Sample {
  double offset_hours = 0.0;
  double value = 0.0;
};

class TimelineSeries {
 public:
  TimelineSeries() = default;
  /// Sorts by offset; throws DataError("InvalidSample") on negative or
  /// non-finite offsets and non-finite values.
  explicit TimelineSeries(std::vector<Sample> samples);

  const std::vector<Sample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }

 private:
  std::vector<Sample> samples_;
};

using DailySeries = std::map<Day, double>;

DailySeries daily_median(const TimelineSeries& series);
DailySeries daily_sum(const TimelineSeries& series);

/// (in(t-1)+in(t)) / (out(t-1)+out(t)). Errors: MissingDay, ZeroDenominator.
double fluids_ratio(const DailySeries& inputs, const DailySeries& outputs, Day t);

/// Treated patients decide on their first dose day, the rest on a default.
Day decision_timepoint(std::optional<Day> first_dose_day, Day default_untreated = 4);

struct TimepointPolicy {
  Day default_t1 = 4;
  Day t2 = 3;
  Day t3 = 4;
};

struct Timepoints {
  Day t0 = 1;
  Day t1 = 4;
  Day t2 = 3;
  Day t3 = 4;
};

inline constexpr int kNumVariables = 58;

enum Var : int {
  kTreatment = 1,
  kAge = 2,
  kGender = 3,
  kRace = 4,
  kSapsAvg = 5,
  kSapsDay1 = 6,
  kSofaAvg = 10,
  kSofaDay1 = 11,
  kElixOverall = 15,
  kElixFirst = 16,
  kCreatinineAvg = 25,
  kFluidsInAvg = 30,
  kFluidsOutAvg = 35,
  kBalanceAvg = 40,
  kVasopressors = 45,
  kVentilation = 46,
  kAbpAvg = 47,
  kMapAvg = 52,
  kMortality = 57,
  kLengthOfStay = 58,
};

/// Variables restricted to {-1,+1}.
bool is_binary_variable(int var);

struct StudyRow {
  cohort::PatientKey key;
  std::array<double, kNumVariables> x{};

  double& operator[](int var) { return x.at(static_cast<std::size_t>(var - 1)); }
  double operator[](int var) const { return x.at(static_cast<std::size_t>(var - 1)); }
};

class StudyGroup {
 public:
  StudyGroup() = default;
  /// Sorts rows by key; throws DataError on duplicate keys or binary
  /// variables outside {-1,+1}.
  explicit StudyGroup(std::vector<StudyRow> rows);

  const std::vector<StudyRow>& rows() const { return rows_; }
  std::size_t n() const { return rows_.size(); }
  std::size_t n_treated() const;
  std::size_t n_untreated() const { return n() - n_treated(); }

  std::vector<double> column(int var) const;
  std::vector<cohort::PatientKey> keys() const;

  /// Rows whose predicate holds, preserving order.
  template <class Pred>
  StudyGroup subset(Pred pred) const {
    std::vector<StudyRow> kept;
    for (const auto& r : rows_)
      if (pred(r)) kept.push_back(r);
    StudyGroup g;
    g.rows_ = std::move(kept);
    return g;
  }

 private:
  std::vector<StudyRow> rows_;
};

csv::Table study_group_table(const StudyGroup& group);
StudyGroup study_group_from_table(const csv::Table& table);

// ---------------------------------------------------------------------------
// Assembly

/// Everything known about one patient after joining the extract files.
struct PatientExtracts {
  cohort::PatientKey key;
  std::optional<double> age;
  std::optional<std::string> gender;     // "M" / "F"
  std::optional<std::string> ethnicity;  // free text, "WHITE..." counts as white
  std::optional<double> elix_overall;
  std::array<std::optional<double>, 9> elix_flags{};
  TimelineSeries saps, sofa, creatinine, abp, map;
  TimelineSeries fluids_in, fluids_out;  // liters
  std::vector<double> diuretic_doses;    // offsets in hours
  std::optional<double> vasopressors;
  std::optional<double> ventilation;
  std::optional<double> died_30d;
  std::optional<double> icu_out_hours;
};

struct AssemblyOptions {
  TimepointPolicy timepoints;
  /// Variables whose absence rejects the patient; empty means all 58.
  std::vector<int> mandatory;
};

struct Rejection {
  cohort::PatientKey key;
  std::string reason;  // names the first missing mandatory variable
};

struct AssemblyResult {
  StudyGroup group;
  std::vector<Rejection> rejected;
};

/// Builds one row; missing values are NaN.
StudyRow compute_row(const PatientExtracts& p, const TimepointPolicy& policy);
Timepoints timepoints_for(const PatientExtracts& p, const TimepointPolicy& policy);

AssemblyResult assemble_study_group(std::span<const PatientExtracts> patients,
                                    const AssemblyOptions& options = {});

/// Fluid item ids counted as inputs.
std::vector<std::int64_t> default_fluid_items();

struct JoinOptions {
  std::vector<std::int64_t> fluid_items = default_fluid_items();
};

/// Attaches every variable extract to the id list via sorted merge joins.
std::vector<PatientExtracts> join_extracts(const std::vector<cohort::PatientKey>& keys,
                                           const cohort::Extracts& extracts,
                                           const JoinOptions& options = {});

csv::Table rejections_table(const std::vector<Rejection>& rejected);

}  // namespace strata::varprep
