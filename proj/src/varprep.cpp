#include "strata/varprep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::varprep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class Reduce>
DailySeries by_day(const TimelineSeries& series, Reduce reduce) {
  DailySeries out;
  const auto& s = series.samples();
  std::size_t i = 0;
  while (i < s.size()) {
    const Day d = day_of_offset(s[i].offset_hours);
    std::vector<double> values;
    while (i < s.size() && day_of_offset(s[i].offset_hours) == d) values.push_back(s[i++].value);
    out[d] = reduce(std::move(values));
  }
  return out;
}

double at(const DailySeries& s, Day d) {
  auto it = s.find(d);
  return it == s.end() ? kNaN : it->second;
}

double mean_over(const DailySeries& s, Day from, Day to) {
  double sum = 0.0;
  int n = 0;
  for (auto it = s.lower_bound(from); it != s.end() && it->first <= to; ++it) {
    sum += it->second;
    ++n;
  }
  return n ? sum / n : kNaN;
}

// avg day1..T1, day1, T1, T2, T3
std::array<double, 5> recipe(const DailySeries& s, const Timepoints& tp) {
  return {mean_over(s, tp.t0, tp.t1), at(s, tp.t0), at(s, tp.t1), at(s, tp.t2), at(s, tp.t3)};
}

void put(StudyRow& row, int first, const std::array<double, 5>& v) {
  for (int i = 0; i < 5; ++i) row[first + i] = v[static_cast<std::size_t>(i)];
}

double encode_flag(const std::optional<double>& v) {
  if (!v || std::isnan(*v)) return kNaN;
  return *v > 0 ? 1.0 : -1.0;
}

}  // namespace

Day day_of_offset(double offset_hours) { return static_cast<Day>(std::floor(offset_hours / 24.0)) + 1; }

TimelineSeries::TimelineSeries(std::vector<Sample> samples) : samples_(std::move(samples)) {
  for (const auto& s : samples_) {
    if (!std::isfinite(s.offset_hours) || s.offset_hours < 0 || !std::isfinite(s.value))
      throw DataError("InvalidSample",
                      fmt::format("sample at offset {} with value {} is not usable", s.offset_hours, s.value));
  }
  std::stable_sort(samples_.begin(), samples_.end(),
                   [](const Sample& a, const Sample& b) { return a.offset_hours < b.offset_hours; });
}

DailySeries daily_median(const TimelineSeries& series) {
  return by_day(series, [](std::vector<double> v) { return median_of(std::move(v)); });
}

DailySeries daily_sum(const TimelineSeries& series) {
  return by_day(series, [](std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  });
}

double fluids_ratio(const DailySeries& inputs, const DailySeries& outputs, Day t) {
  for (const auto* s : {&inputs, &outputs}) {
    for (Day d : {t - 1, t}) {
      if (!s->count(d))
        throw DataError("MissingDay", fmt::format("day {} missing from the {} series", d,
                                                  s == &inputs ? "input" : "output"));
    }
  }
  const double den = outputs.at(t - 1) + outputs.at(t);
  if (den == 0.0) throw NumericError("ZeroDenominator", fmt::format("outputs on days {} and {} sum to 0", t - 1, t));
  return (inputs.at(t - 1) + inputs.at(t)) / den;
}

Day decision_timepoint(std::optional<Day> first_dose_day, Day default_untreated) {
  return first_dose_day ? *first_dose_day : default_untreated;
}

bool is_binary_variable(int var) {
  return var == kTreatment || var == kGender || var == kRace ||
         (var >= kElixFirst && var < kElixFirst + 9) || var == kVasopressors ||
         var == kVentilation || var == kMortality;
}

// ---------------------------------------------------------------------------
// StudyGroup

StudyGroup::StudyGroup(std::vector<StudyRow> rows) : rows_(std::move(rows)) {
  std::sort(rows_.begin(), rows_.end(),
            [](const StudyRow& a, const StudyRow& b) { return a.key < b.key; });
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (i > 0 && rows_[i].key == rows_[i - 1].key)
      throw DataError("DuplicateKey", fmt::format("study group holds {} twice", rows_[i].key.to_string()));
    for (int v = 1; v <= kNumVariables; ++v) {
      const double x = rows_[i][v];
      if (is_binary_variable(v) && !std::isnan(x) && x != 1.0 && x != -1.0)
        throw DataError("InvalidEncoding",
                        fmt::format("{} has x{} = {}, expected -1 or +1", rows_[i].key.to_string(), v, x));
    }
  }
}

std::size_t StudyGroup::n_treated() const {
  return static_cast<std::size_t>(std::count_if(rows_.begin(), rows_.end(),
                                                [](const StudyRow& r) { return r[kTreatment] > 0; }));
}

std::vector<double> StudyGroup::column(int var) const {
  if (var < 1 || var > kNumVariables)
    throw ConfigError("UnknownVariable", fmt::format("variable x{} does not exist", var));
  std::vector<double> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r[var]);
  return out;
}

std::vector<cohort::PatientKey> StudyGroup::keys() const {
  std::vector<cohort::PatientKey> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r.key);
  return out;
}

csv::Table study_group_table(const StudyGroup& group) {
  csv::Table t;
  t.header = {"subject_id", "hadm_id", "icustay_id"};
  for (int v = 1; v <= kNumVariables; ++v) t.header.push_back(fmt::format("x{}", v));
  for (const auto& r : group.rows()) {
    std::vector<std::string> row{std::to_string(r.key.subject_id), std::to_string(r.key.hadm_id),
                                 std::to_string(r.key.icustay_id)};
    for (double x : r.x) row.push_back(csv::format_number(x));
    t.rows.push_back(std::move(row));
  }
  return t;
}

StudyGroup study_group_from_table(const csv::Table& table) {
  const auto s = table.column("subject_id");
  const auto h = table.column("hadm_id");
  const auto c = table.column("icustay_id");
  std::array<std::size_t, kNumVariables> cols{};
  for (int v = 1; v <= kNumVariables; ++v)
    cols[static_cast<std::size_t>(v - 1)] = table.column(fmt::format("x{}", v));
  std::vector<StudyRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& src = table.rows[r];
    auto id = [&](std::size_t col) {
      auto v = csv::parse_number(src[col]);
      if (!v) throw DataError("InvalidKey", fmt::format("study group line {} has a bad key", r + 2));
      return static_cast<std::int64_t>(*v);
    };
    StudyRow row;
    row.key = cohort::make_key(id(s), id(h), id(c));
    for (std::size_t v = 0; v < cols.size(); ++v) {
      const auto& text = src[cols[v]];
      if (text == "nan") {
        row.x[v] = kNaN;
        continue;
      }
      auto x = csv::parse_number(text);
      if (!x)
        throw DataError("InvalidNumber",
                        fmt::format("study group line {} x{} = '{}' is not a number", r + 2, v + 1, text));
      row.x[v] = *x;
    }
    rows.push_back(row);
  }
  return StudyGroup(std::move(rows));
}

// ---------------------------------------------------------------------------
// Assembly

Timepoints timepoints_for(const PatientExtracts& p, const TimepointPolicy& policy) {
  std::optional<Day> first;
  if (!p.diuretic_doses.empty())
    first = day_of_offset(*std::min_element(p.diuretic_doses.begin(), p.diuretic_doses.end()));
  Timepoints tp;
  tp.t1 = decision_timepoint(first, policy.default_t1);
  tp.t2 = policy.t2;
  tp.t3 = policy.t3;
  return tp;
}

StudyRow compute_row(const PatientExtracts& p, const TimepointPolicy& policy) {
  StudyRow row;
  row.key = p.key;
  row.x.fill(kNaN);
  const Timepoints tp = timepoints_for(p, policy);
  const bool treated = !p.diuretic_doses.empty();

  row[kTreatment] = treated ? 1.0 : -1.0;
  row[kAge] = p.age.value_or(kNaN);
  if (p.gender) row[kGender] = *p.gender == "M" ? -1.0 : 1.0;
  if (p.ethnicity) {
    std::string upper = *p.ethnicity;
    for (char& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    row[kRace] = upper.find("WHITE") != std::string::npos ? 1.0 : -1.0;
  }
  put(row, kSapsAvg, recipe(daily_median(p.saps), tp));
  put(row, kSofaAvg, recipe(daily_median(p.sofa), tp));
  row[kElixOverall] = p.elix_overall.value_or(kNaN);
  for (std::size_t i = 0; i < p.elix_flags.size(); ++i)
    row[kElixFirst + static_cast<int>(i)] = encode_flag(p.elix_flags[i]);
  put(row, kCreatinineAvg, recipe(daily_median(p.creatinine), tp));

  const auto in = recipe(daily_sum(p.fluids_in), tp);
  const auto out = recipe(daily_sum(p.fluids_out), tp);
  put(row, kFluidsInAvg, in);
  put(row, kFluidsOutAvg, out);
  for (int i = 0; i < 5; ++i)
    row[kBalanceAvg + i] = row[kFluidsInAvg + i] - row[kFluidsOutAvg + i];

  row[kVasopressors] = encode_flag(p.vasopressors);
  row[kVentilation] = encode_flag(p.ventilation);
  put(row, kAbpAvg, recipe(daily_median(p.abp), tp));
  put(row, kMapAvg, recipe(daily_median(p.map), tp));
  row[kMortality] = encode_flag(p.died_30d);
  if (p.icu_out_hours) {
    const double start = treated
                             ? *std::min_element(p.diuretic_doses.begin(), p.diuretic_doses.end())
                             : 24.0 * (tp.t1 - 1);
    row[kLengthOfStay] = std::max(0.0, (*p.icu_out_hours - start) / 24.0);
  }
  return row;
}

AssemblyResult assemble_study_group(std::span<const PatientExtracts> patients,
                                    const AssemblyOptions& options) {
  std::vector<int> mandatory = options.mandatory;
  if (mandatory.empty())
    for (int v = 1; v <= kNumVariables; ++v) mandatory.push_back(v);
  AssemblyResult result;
  std::vector<StudyRow> rows;
  for (const auto& p : patients) {
    StudyRow row = compute_row(p, options.timepoints);
    auto missing = std::find_if(mandatory.begin(), mandatory.end(),
                                [&](int v) { return std::isnan(row[v]); });
    if (missing != mandatory.end()) {
      result.rejected.push_back({p.key, fmt::format("missing x{}", *missing)});
      continue;
    }
    rows.push_back(row);
  }
  std::sort(result.rejected.begin(), result.rejected.end(),
            [](const Rejection& a, const Rejection& b) { return a.key < b.key; });
  result.group = StudyGroup(std::move(rows));
  return result;
}

std::vector<std::int64_t> default_fluid_items() {
  return {106, 107, 130, 131, 134, 142, 151, 152, 154, 165,
          180, 187, 214, 219, 249, 297, 299, 309, 615, 631};
}

namespace {

std::optional<double> number_at(const csv::Table& t, std::size_t row, std::size_t col) {
  return csv::parse_number(t.rows[row][col]);
}

// Reads (offset, value) samples; rows with a blank or malformed value are dropped.
TimelineSeries timeline(const csv::Table& t, const std::vector<std::size_t>& rows,
                        const std::set<std::int64_t>* items = nullptr) {
  if (rows.empty()) return {};
  const auto off = t.column("offset_hours");
  const auto val = t.column("value");
  std::optional<std::size_t> item_col;
  if (items) item_col = t.column("item_id");
  std::vector<Sample> samples;
  for (auto r : rows) {
    if (item_col) {
      auto item = number_at(t, r, *item_col);
      if (!item || !items->count(static_cast<std::int64_t>(*item))) continue;
    }
    auto o = number_at(t, r, off);
    auto v = number_at(t, r, val);
    if (o && v) samples.push_back({*o, *v});
  }
  return TimelineSeries(std::move(samples));
}

std::optional<double> first_number(const csv::Table& t, const std::vector<std::size_t>& rows,
                                   std::string_view column) {
  if (rows.empty()) return std::nullopt;
  return number_at(t, rows.front(), t.column(column));
}

const std::array<const char*, 9> kElixFlagColumns{
    "chf",       "arrhythmia",    "valvular",      "hypertension", "diabetes_uncomplicated",
    "diabetes_complicated", "renal_failure", "liver_disease", "obesity"};

}  // namespace

std::vector<PatientExtracts> join_extracts(const std::vector<cohort::PatientKey>& keys,
                                           const cohort::Extracts& extracts,
                                           const JoinOptions& options) {
  const std::set<std::int64_t> items(options.fluid_items.begin(), options.fluid_items.end());
  std::vector<PatientExtracts> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) out[i].key = keys[i];

  auto attach = [&](std::string_view name) {
    return cohort::attach_rows(keys, extracts.table(name), name);
  };

  {
    const auto& t = extracts.table("icustays");
    const auto m = attach("icustays");
    for (std::size_t i = 0; i < keys.size(); ++i) out[i].age = first_number(t, m[i], "age");
  }
  {
    const auto& t = extracts.table("demographics");
    const auto m = attach("demographics");
    const auto g = t.column("gender"), e = t.column("ethnicity");
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (m[i].empty()) continue;
      const auto& row = t.rows[m[i].front()];
      if (!row[g].empty()) out[i].gender = row[g];
      if (!row[e].empty()) out[i].ethnicity = row[e];
    }
  }
  {
    const auto& t = extracts.table("elixhauser");
    const auto m = attach("elixhauser");
    for (std::size_t i = 0; i < keys.size(); ++i) {
      out[i].elix_overall = first_number(t, m[i], "overall");
      for (std::size_t f = 0; f < kElixFlagColumns.size(); ++f)
        out[i].elix_flags[f] = first_number(t, m[i], kElixFlagColumns[f]);
    }
  }
  const std::pair<const char*, TimelineSeries PatientExtracts::*> timelines[] = {
      {"saps", &PatientExtracts::saps},
      {"sofa", &PatientExtracts::sofa},
      {"creatinine", &PatientExtracts::creatinine},
      {"abp", &PatientExtracts::abp},
      {"map", &PatientExtracts::map},
      {"fluids_out", &PatientExtracts::fluids_out},
  };
  for (const auto& [name, member] : timelines) {
    const auto& t = extracts.table(name);
    const auto m = attach(name);
    for (std::size_t i = 0; i < keys.size(); ++i) out[i].*member = timeline(t, m[i]);
  }
  {
    const auto& t = extracts.table("fluids_in");
    const auto m = attach("fluids_in");
    for (std::size_t i = 0; i < keys.size(); ++i) out[i].fluids_in = timeline(t, m[i], &items);
  }
  {
    const auto& t = extracts.table("diuretics");
    const auto m = attach("diuretics");
    const auto off = t.column("offset_hours");
    for (std::size_t i = 0; i < keys.size(); ++i)
      for (auto r : m[i])
        if (auto o = number_at(t, r, off)) out[i].diuretic_doses.push_back(*o);
  }
  {
    const auto& t = extracts.table("vasopressors");
    const auto m = attach("vasopressors");
    for (std::size_t i = 0; i < keys.size(); ++i) out[i].vasopressors = first_number(t, m[i], "given");
  }
  {
    const auto& t = extracts.table("ventilation");
    const auto m = attach("ventilation");
    for (std::size_t i = 0; i < keys.size(); ++i) out[i].ventilation = first_number(t, m[i], "ventilated");
  }
  {
    const auto& t = extracts.table("outcomes");
    const auto m = attach("outcomes");
    for (std::size_t i = 0; i < keys.size(); ++i) {
      out[i].died_30d = first_number(t, m[i], "died_30d");
      out[i].icu_out_hours = first_number(t, m[i], "icu_out_hours");
    }
  }
  return out;
}

csv::Table rejections_table(const std::vector<Rejection>& rejected) {
  csv::Table t;
  t.header = {"subject_id", "hadm_id", "icustay_id", "reason"};
  for (const auto& r : rejected)
    t.rows.push_back({std::to_string(r.key.subject_id), std::to_string(r.key.hadm_id),
                      std::to_string(r.key.icustay_id), r.reason});
  return t;
}

}  // namespace strata::varprep
