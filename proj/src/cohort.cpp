#include "strata/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_set>

namespace strata::cohort {

PatientKey make_key(std::int64_t subject_id, std::int64_t hadm_id, std::int64_t icustay_id) {
  PatientKey key{subject_id, hadm_id, icustay_id};
  if (!key.valid()) throw DataError("InvalidKey", "key components must be positive: " + key.to_string());
  return key;
}

std::string_view component_column(KeyComponent which) {
  switch (which) {
    case KeyComponent::kSubject: return "subject_id";
    case KeyComponent::kHadm: return "hadm_id";
    case KeyComponent::kIcustay: return "icustay_id";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Lexicon and naive detection

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

bool contains_sequence(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i)))
      return true;
  }
  return false;
}

bool mentions_drug(std::string_view text, const DrugLexicon& lexicon) {
  const auto tokens = tokenize(text);
  for (const auto& entry : lexicon.entries()) {
    if (contains_sequence(tokens, tokenize(entry))) return true;
  }
  return false;
}

// A heading is a short label at the start of a line terminated by ':'.
std::optional<std::pair<std::string, std::size_t>> heading_label(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  const std::size_t start = i;
  if (i >= line.size() || !std::isalpha(static_cast<unsigned char>(line[i]))) return std::nullopt;
  while (i < line.size() && i - start <= 48) {
    const char c = line[i];
    if (c == ':') {
      return std::make_pair(std::string(line.substr(start, i - start)), i + 1);
    }
    if (!(std::isalpha(static_cast<unsigned char>(c)) || c == ' ' || c == '/' || c == '&' ||
          c == '-' || c == '(' || c == ')'))
      return std::nullopt;
    ++i;
  }
  return std::nullopt;
}

}  // namespace

DrugLexicon::DrugLexicon(const std::vector<std::string>& entries) {
  for (const auto& e : entries) {
    auto t = lower(trim(e));
    if (!t.empty()) entries_.insert(std::move(t));
  }
  if (entries_.empty()) throw ConfigError("EmptyLexicon", "drug lexicon has no entries");
}

DrugLexicon DrugLexicon::defaults() {
  return DrugLexicon({
      "acetazolamide", "diamox", "dichlorphenamide", "daranide", "methazolamide", "glauctabs",
      "mzm", "neptazane", "torsemide", "demadex", "furosemide", "lasix", "spironolactone",
      "pironolactone", "aldactone", "amiloride", "midamor", "triamterene", "dyrenium",
      "hydrochlorothiazide", "hctz", "hydrodiuril", "aquazide h", "esidrix", "microzide",
      "metolazone", "mykrox", "zaroxolyn", "methyclothiazide", "enduron", "aquatensen",
      "chlorothiazide", "diuril", "indapamide", "lozol", "bendroflumethiazide", "naturetin",
      "polythiazide", "renese", "hydroflumethiazide", "saluron", "chlorthalidone", "thalitone",
  });
}

bool detect_naive(std::string_view summary, const DrugLexicon& lexicon, const NaiveConfig& config) {
  std::vector<std::vector<std::string>> heading_tokens;
  for (const auto& h : config.headings) heading_tokens.push_back(tokenize(h));

  // Collect the text of every pre-admission section: from a matching heading
  // to the next heading-shaped line.
  std::string scoped;
  bool any_heading = false;
  bool inside = false;
  std::size_t pos = 0;
  while (pos <= summary.size()) {
    std::size_t nl = summary.find('\n', pos);
    if (nl == std::string_view::npos) nl = summary.size();
    const std::string_view line = summary.substr(pos, nl - pos);
    if (auto label = heading_label(line)) {
      const auto label_tokens = tokenize(label->first);
      const bool pre_admission =
          std::any_of(heading_tokens.begin(), heading_tokens.end(),
                      [&](const auto& h) { return contains_sequence(label_tokens, h); });
      inside = pre_admission;
      if (pre_admission) {
        any_heading = true;
        scoped.append(line.substr(label->second));
        scoped.push_back('\n');
      }
    } else if (inside) {
      scoped.append(line);
      scoped.push_back('\n');
    }
    pos = nl + 1;
  }
  if (!any_heading) return !mentions_drug(summary, lexicon);
  return !mentions_drug(scoped, lexicon);
}

// ---------------------------------------------------------------------------
// Pipeline description

std::string_view to_string(StepKind kind) {
  switch (kind) {
    case StepKind::kExtract: return "Extract";
    case StepKind::kIntersect: return "Intersect";
    case StepKind::kFilter: return "Filter";
  }
  return "";
}

PipelineSpec parse_pipeline(std::string_view text) {
  PipelineSpec spec;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::string label;
    if (auto bar = line.find('|'); bar != std::string::npos) {
      label = trim(line.substr(bar + 1));
      line = trim(line.substr(0, bar));
    }
    std::istringstream words(line);
    std::vector<std::string> w;
    for (std::string t; words >> t;) w.push_back(t);
    auto bad = [&](const std::string& why) {
      return ConfigError("BadPipeline", fmt::format("line {}: {}", line_no, why));
    };
    if (w[0] == "universe") {
      if (w.size() != 2) throw bad("universe takes one table name");
      spec.universe = w[1];
      continue;
    }
    if (w.size() < 3) throw bad("expected '<index> <kind> <set> ...'");
    FilterStep step;
    try {
      step.index = std::stoi(w[0]);
    } catch (const std::exception&) {
      throw bad("step index is not an integer");
    }
    step.name = w[2];
    step.label = label;
    if (w[1] == "extract") {
      if (w.size() < 5) throw bad("extract needs a table and at least one predicate");
      step.kind = StepKind::kExtract;
      step.source = w[3];
      step.predicates.assign(w.begin() + 4, w.end());
    } else if (w[1] == "intersect") {
      if (w.size() != 5) throw bad("intersect references exactly two sets");
      step.kind = StepKind::kIntersect;
      step.inputs = {w[3], w[4]};
    } else if (w[1] == "filter") {
      if (w.size() < 5) throw bad("filter needs an input set and at least one predicate");
      step.kind = StepKind::kFilter;
      step.inputs = {w[3]};
      step.predicates.assign(w.begin() + 4, w.end());
    } else {
      throw bad("unknown step kind '" + w[1] + "'");
    }
    if (step.label.empty()) step.label = trim(line.substr(line.find(w[1])));
    spec.steps.push_back(std::move(step));
  }
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    if (spec.steps[i].index != static_cast<int>(i) + 1)
      throw ConfigError("BadPipeline", fmt::format("step indices must be contiguous from 1 (found {} at position {})",
                                                   spec.steps[i].index, i + 1));
  }
  if (spec.universe.empty() && !spec.steps.empty()) {
    for (const auto& s : spec.steps) {
      if (s.kind == StepKind::kExtract) {
        spec.universe = s.source;
        break;
      }
    }
  }
  return spec;
}

PipelineSpec read_pipeline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("MissingFile", fmt::format("cannot open pipeline '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline(ss.str());
}

std::string default_pipeline_text() {
  return R"(# Study group extraction: extracts, intersections and the final missing-data filter.
universe icustays
1 extract A icustays ids_present | all three ids available
2 extract B icustays hospital_admissions==1 icu_admissions==1 | one hospital and one ICU admission
3 intersect C A B | A and B
4 extract D icustays icu_los_hours>=24 | at least one full day in the ICU
5 intersect E C D | C and D
6 extract F icustays age>=18 | age 18 or over
7 intersect G E F | E and F
8 extract H icustays sepsis==1 | sepsis
9 intersect I G H | G and H
10 extract L icustays cmo==0 | not comfort measures only
11 intersect M I L | I and L
12 extract N icustays has_summary | discharge summary available
13 intersect O M N | M and N
14 extract P icustays naive | diuretics naive
15 intersect Q O P | O and P
16 filter R Q complete(demographics,elixhauser,saps,sofa,creatinine,fluids_in,fluids_out,abp,map,vasopressors,ventilation,outcomes) | missing data
)";
}

// ---------------------------------------------------------------------------
// Extract loading

const csv::Table& Extracts::table(std::string_view name) const {
  auto it = tables.find(name);
  if (it == tables.end())
    throw DataError("MissingExtract", fmt::format("extract table '{}' not loaded", name));
  return it->second;
}

Extracts Extracts::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw ConfigError("MissingPath", fmt::format("extracts directory '{}' does not exist", dir.string()));
  Extracts ex;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ex.tables.emplace(f.stem().string(), csv::read_file(f));
  return ex;
}

// ---------------------------------------------------------------------------
// Pipeline execution

namespace {

std::optional<std::int64_t> parse_id(std::string_view s) {
  auto v = csv::parse_number(s);
  if (!v || *v <= 0 || *v != static_cast<double>(static_cast<std::int64_t>(*v))) return std::nullopt;
  return static_cast<std::int64_t>(*v);
}

std::string describe(const Record& r) {
  return r.key ? r.key->to_string() : fmt::format("row {} (incomplete key)", r.row + 1);
}

std::vector<Record> records_of(const csv::Table& table) {
  const auto s = table.column("subject_id");
  const auto h = table.column("hadm_id");
  const auto c = table.column("icustay_id");
  std::vector<Record> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    Record rec{std::nullopt, r};
    auto si = parse_id(row[s]), hi = parse_id(row[h]), ci = parse_id(row[c]);
    if (si && hi && ci) rec.key = PatientKey{*si, *hi, *ci};
    out.push_back(rec);
  }
  return out;
}

KeyComponent key_component_of(const csv::Table& table, std::string_view name) {
  for (auto k : {KeyComponent::kIcustay, KeyComponent::kHadm, KeyComponent::kSubject}) {
    if (table.find_column(component_column(k))) return k;
  }
  throw DataError("MissingColumn", fmt::format("table '{}' has no id column", name));
}

// (id, row) pairs in file order for a keyed lookup table.
std::vector<std::pair<std::int64_t, std::size_t>> keyed_rows(const csv::Table& table,
                                                            std::string_view name,
                                                            KeyComponent by) {
  const auto col = table.column(component_column(by));
  std::vector<std::pair<std::int64_t, std::size_t>> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto id = parse_id(table.rows[r][col]);
    if (!id)
      throw DataError("InvalidKey", fmt::format("table '{}' line {}: bad {}", name, r + 2,
                                                component_column(by)));
    out.emplace_back(*id, r);
  }
  return out;
}

std::vector<std::vector<std::size_t>> lookup(const std::vector<Record>& records,
                                             const csv::Table& table, std::string_view name) {
  std::vector<std::size_t> keyed;
  std::vector<PatientKey> keys;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].key) {
      keyed.push_back(i);
      keys.push_back(*records[i].key);
    }
  }
  auto matched = attach_rows(keys, table, name);
  std::vector<std::vector<std::size_t>> out(records.size());
  for (std::size_t k = 0; k < keyed.size(); ++k) out[keyed[k]] = std::move(matched[k]);
  return out;
}

using PredicateFn =
    std::function<std::vector<char>(const csv::Table&, const std::vector<Record>&)>;

PredicateFn compile_predicate(const std::string& text, const Extracts& extracts,
                              const PipelineOptions& options) {
  if (text == "always") {
    return [](const csv::Table&, const std::vector<Record>& recs) {
      return std::vector<char>(recs.size(), 1);
    };
  }
  if (text == "ids_present") {
    return [](const csv::Table&, const std::vector<Record>& recs) {
      std::vector<char> out(recs.size());
      for (std::size_t i = 0; i < recs.size(); ++i) out[i] = recs[i].key.has_value();
      return out;
    };
  }
  if (text == "has_summary" || text == "naive") {
    const bool naive = text == "naive";
    return [naive, &extracts, &options](const csv::Table&, const std::vector<Record>& recs) {
      const auto& summaries = extracts.table(options.summaries_table);
      const auto text_col = summaries.column("text");
      const auto matches = lookup(recs, summaries, options.summaries_table);
      std::vector<char> out(recs.size(), 0);
      for (std::size_t i = 0; i < recs.size(); ++i) {
        if (matches[i].empty()) continue;
        if (!naive) {
          out[i] = 1;
          continue;
        }
        out[i] = std::all_of(matches[i].begin(), matches[i].end(), [&](std::size_t r) {
          return detect_naive(summaries.rows[r][text_col], options.lexicon, options.naive);
        });
      }
      return out;
    };
  }
  if (text.rfind("complete(", 0) == 0 && text.back() == ')') {
    std::vector<std::string> names;
    std::stringstream ss(text.substr(9, text.size() - 10));
    for (std::string n; std::getline(ss, n, ',');)
      if (!trim(n).empty()) names.push_back(trim(n));
    return [names, &extracts](const csv::Table&, const std::vector<Record>& recs) {
      std::vector<char> out(recs.size(), 1);
      for (std::size_t i = 0; i < recs.size(); ++i) out[i] = recs[i].key.has_value();
      for (const auto& n : names) {
        const auto matches = lookup(recs, extracts.table(n), n);
        for (std::size_t i = 0; i < recs.size(); ++i)
          if (matches[i].empty()) out[i] = 0;
      }
      return out;
    };
  }
  // field comparison: <field><op><value>
  static const std::vector<std::string> ops{">=", "<=", "!=", "==", ">", "<"};
  for (const auto& op : ops) {
    auto p = text.find(op);
    if (p == std::string::npos || p == 0) continue;
    const std::string field = text.substr(0, p);
    const std::string rhs = text.substr(p + op.size());
    const auto rhs_num = csv::parse_number(rhs);
    if (!rhs_num && op != "==" && op != "!=")
      throw ConfigError("BadPredicate", fmt::format("'{}' compares against a non-number", text));
    return [field, op, rhs, rhs_num](const csv::Table& table, const std::vector<Record>& recs) {
      const auto col = table.find_column(field);
      std::vector<char> out(recs.size(), 0);
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const std::string* value = col ? &table.rows[recs[i].row][*col] : nullptr;
        if (!value || value->empty())
          throw DataError("PredicateFailure",
                          fmt::format("record {} lacks field '{}'", describe(recs[i]), field));
        if (!rhs_num) {
          out[i] = (op == "==") == (*value == rhs);
          continue;
        }
        const auto v = csv::parse_number(*value);
        if (!v)
          throw DataError("PredicateFailure", fmt::format("record {} has non-numeric '{}' = '{}'",
                                                          describe(recs[i]), field, *value));
        const double a = *v, b = *rhs_num;
        bool ok = false;
        if (op == ">=") ok = a >= b;
        else if (op == "<=") ok = a <= b;
        else if (op == ">") ok = a > b;
        else if (op == "<") ok = a < b;
        else if (op == "==") ok = a == b;
        else ok = a != b;
        out[i] = ok;
      }
      return out;
    };
  }
  throw ConfigError("UnknownPredicate", fmt::format("unknown predicate '{}'", text));
}

std::vector<Record> apply_predicates(const std::vector<Record>& in, const csv::Table& table,
                                     const std::vector<PredicateFn>& preds) {
  std::vector<char> keep(in.size(), 1);
  for (const auto& p : preds) {
    const auto r = p(table, in);
    for (std::size_t i = 0; i < in.size(); ++i) keep[i] = keep[i] && r[i];
  }
  std::vector<Record> out;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (keep[i]) out.push_back(in[i]);
  return out;
}

void check_unique(const std::vector<Record>& recs, const std::string& set_name) {
  std::vector<PatientKey> keys;
  for (const auto& r : recs)
    if (r.key) keys.push_back(*r.key);
  std::sort(keys.begin(), keys.end());
  auto dup = std::adjacent_find(keys.begin(), keys.end());
  if (dup != keys.end())
    throw DataError("DuplicateKey", fmt::format("set '{}' holds {} twice", set_name, dup->to_string()));
}

}  // namespace

std::vector<std::vector<std::size_t>> attach_rows(std::span<const PatientKey> keys,
                                                  const csv::Table& table,
                                                  std::string_view name) {
  const KeyComponent by = key_component_of(table, name);
  std::vector<std::size_t> order(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return component(keys[a], by) < component(keys[b], by);
  });
  std::vector<PatientKey> ids;
  ids.reserve(order.size());
  for (auto i : order) ids.push_back(keys[i]);
  const auto values = keyed_rows(table, name, by);
  std::vector<JoinGroup<std::size_t>> groups;
  try {
    groups = sorted_merge_join<std::size_t>(ids, by, values);
  } catch (const UnsortedInput& e) {
    throw DataError("UnsortedInput", fmt::format("table '{}' is not sorted by {} at line {}", name,
                                                 component_column(by), e.index() + 2));
  }
  std::vector<std::vector<std::size_t>> out(keys.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].rows) out[order[g]] = *groups[g].rows;
  }
  return out;
}

PipelineResult run_filter_pipeline(const Extracts& extracts, const PipelineSpec& spec,
                                   const PipelineOptions& options) {
  PipelineResult result;
  if (spec.steps.empty()) return result;
  const double original = static_cast<double>(extracts.table(spec.universe).rows.size());
  std::map<std::string, RecordSet, std::less<>> sets;

  auto get_set = [&](const std::string& name, int step) -> const RecordSet& {
    auto it = sets.find(name);
    if (it == sets.end())
      throw DataError("UnknownSetReference",
                      fmt::format("step {} references unknown set '{}'", step, name));
    return it->second;
  };
  auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };

  for (const auto& step : spec.steps) {
    RecordSet out;
    double previous = original;
    std::vector<PredicateFn> preds;
    for (const auto& p : step.predicates) preds.push_back(compile_predicate(p, extracts, options));

    switch (step.kind) {
      case StepKind::kExtract: {
        const auto& table = extracts.table(step.source);
        out.source = step.source;
        out.records = apply_predicates(records_of(table), table, preds);
        previous = static_cast<double>(table.rows.size());
        break;
      }
      case StepKind::kIntersect: {
        const auto& left = get_set(step.inputs[0], step.index);
        const auto& right = get_set(step.inputs[1], step.index);
        std::vector<PatientKey> right_keys;
        for (const auto& r : right.records)
          if (r.key) right_keys.push_back(*r.key);
        std::sort(right_keys.begin(), right_keys.end());
        out.source = left.source;
        for (const auto& r : left.records) {
          if (r.key && std::binary_search(right_keys.begin(), right_keys.end(), *r.key))
            out.records.push_back(r);
        }
        previous = static_cast<double>(left.records.size());
        break;
      }
      case StepKind::kFilter: {
        const auto& in = get_set(step.inputs[0], step.index);
        out.source = in.source;
        out.records = apply_predicates(in.records, extracts.table(in.source), preds);
        previous = static_cast<double>(in.records.size());
        break;
      }
    }
    check_unique(out.records, step.name);
    std::stable_sort(out.records.begin(), out.records.end(), [](const Record& a, const Record& b) {
      if (a.key.has_value() != b.key.has_value()) return a.key.has_value();
      if (a.key && *a.key != *b.key) return *a.key < *b.key;
      return a.row < b.row;
    });
    const double n = static_cast<double>(out.records.size());
    result.trace.push_back({step.index, step.kind, step.name, step.label, out.records.size(),
                            ratio(n, original), ratio(n, previous)});
    sets[step.name] = std::move(out);
  }

  const auto& last = sets.at(spec.steps.back().name);
  for (const auto& r : last.records) {
    if (!r.key) throw DataError("IncompleteKey", "final set contains a record without a full key");
    result.final_keys.push_back(*r.key);
  }
  return result;
}

csv::Table trace_table(const FilterTrace& trace) {
  csv::Table t;
  t.header = {"step", "kind", "set", "label", "surviving", "pct_of_original", "pct_of_previous"};
  for (const auto& r : trace) {
    t.rows.push_back({std::to_string(r.index), std::string(to_string(r.kind)), r.name, r.label,
                      std::to_string(r.surviving), csv::format_number(r.pct_of_original),
                      csv::format_number(r.pct_of_previous)});
  }
  return t;
}

csv::Table keys_table(const std::vector<PatientKey>& keys) {
  csv::Table t;
  t.header = {"subject_id", "hadm_id", "icustay_id"};
  for (const auto& k : keys)
    t.rows.push_back({std::to_string(k.subject_id), std::to_string(k.hadm_id),
                      std::to_string(k.icustay_id)});
  return t;
}

std::vector<PatientKey> keys_from_table(const csv::Table& table) {
  const auto s = table.column("subject_id");
  const auto h = table.column("hadm_id");
  const auto c = table.column("icustay_id");
  std::vector<PatientKey> keys;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto si = parse_id(table.rows[r][s]), hi = parse_id(table.rows[r][h]),
         ci = parse_id(table.rows[r][c]);
    if (!si || !hi || !ci)
      throw DataError("InvalidKey", fmt::format("id table line {} has an incomplete key", r + 2));
    keys.push_back({*si, *hi, *ci});
  }
  return keys;
}

}  // namespace strata::cohort
