#include "strata/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include <fmt/format.h>

#include "strata/error.hpp"

namespace strata::synth {

namespace {

using varprep::StudyRow;

constexpr int kDays = 4;
constexpr int kT2 = 3;
constexpr int kT3 = 4;
constexpr int kDefaultT1 = 4;
constexpr int kDecoyKinds = 10;
constexpr std::int64_t kExcludedItem = 999;

double round2(double x) { return std::round(x * 100.0) / 100.0; }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
std::string num(double v) { return csv::format_number(v); }

using Daily = std::array<double, kDays>;

struct Patient {
  cohort::PatientKey key;
  Decoy decoy = Decoy::kNone;

  double severity = 0.0;
  double age = 0.0;
  bool male = false;
  std::string ethnicity;
  double elix = 0.0;
  std::array<int, 9> flags{};
  int vaso = 0;
  int vent = 0;

  Daily saps{}, sofa{}, creat{}, abp{}, map{};
  Daily in_a{}, in_b{}, out_a{}, out_b{};

  bool treated = false;
  std::vector<double> doses;
  int t1 = kDefaultT1;
  int died = 0;
  double out_hours = 0.0;
  std::string summary;
};

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  double normal() { return normal_(rng_); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

const std::array<const char*, 5> kEthnicities{"WHITE", "WHITE - RUSSIAN", "BLACK/AFRICAN AMERICAN",
                                              "HISPANIC OR LATINO", "ASIAN"};

void draw_covariates(Patient& p, const SynthSpec& spec, Generator& g) {
  const double L = spec.severity_loading;
  p.severity = g.normal();
  const double trend = g.normal();
  p.age = std::round(std::clamp(64.0 + 6.0 * L * p.severity + 13.0 * g.normal(), 18.0, 95.0) * 10.0) / 10.0;
  p.male = g.bernoulli(0.55);
  const double u = g.uniform(0.0, 1.0);
  p.ethnicity = u < 0.6 ? kEthnicities[0] : u < 0.7 ? kEthnicities[1] : kEthnicities[2 + g.index(3)];
  p.elix = std::max(0.0, std::round(4.0 + 2.5 * L * p.severity + 3.0 * g.normal()));
  for (auto& f : p.flags) f = g.bernoulli(logistic(-1.0 + 0.6 * L * p.severity)) ? 1 : 0;
  p.vaso = g.bernoulli(logistic(-1.0 + 1.2 * L * p.severity)) ? 1 : 0;
  p.vent = g.bernoulli(logistic(-0.2 + 1.0 * L * p.severity)) ? 1 : 0;
  for (int d = 0; d < kDays; ++d) {
    const double s = p.severity + 0.15 * d * trend;
    p.saps[d] = round2(std::max(0.0, 17.0 + 6.0 * L * s + 2.0 * g.normal()));
    p.sofa[d] = round2(std::max(0.0, 6.0 + 2.5 * L * s + 1.0 * g.normal()));
    p.creat[d] = round2(std::max(0.2, 1.3 + 0.4 * L * s + 0.15 * g.normal()));
    p.abp[d] = round2(118.0 - 8.0 * L * s + 6.0 * g.normal());
    p.map[d] = round2(78.0 - 6.0 * L * s + 4.0 * g.normal());
    const double in = round2(std::max(0.2, 2.4 + 0.5 * L * s + 0.4 * g.normal()));
    const double out = round2(std::max(0.2, 2.0 - 0.3 * L * s + 0.4 * g.normal()));
    p.in_a[d] = round2(in * g.uniform(0.3, 0.7));
    p.in_b[d] = in - p.in_a[d];
    p.out_a[d] = round2(out * g.uniform(0.3, 0.7));
    p.out_b[d] = out - p.out_a[d];
  }
}

// Average over days 1..t1 (skipping missing ones), then day 1, T1, T2, T3.
void put_recipe(StudyRow& row, int first, const std::array<std::optional<double>, kDays>& daily, int t1) {
  double sum = 0.0;
  int count = 0;
  for (int d = 1; d <= t1; ++d) {
    if (daily[static_cast<std::size_t>(d - 1)]) {
      sum += *daily[static_cast<std::size_t>(d - 1)];
      ++count;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto at = [&](int d) { return daily[static_cast<std::size_t>(d - 1)].value_or(nan); };
  row[first] = count ? sum / count : nan;
  row[first + 1] = at(1);
  row[first + 2] = at(t1);
  row[first + 3] = at(kT2);
  row[first + 4] = at(kT3);
}

std::array<std::optional<double>, kDays> present(const Daily& v) {
  std::array<std::optional<double>, kDays> out;
  for (int d = 0; d < kDays; ++d) out[static_cast<std::size_t>(d)] = v[static_cast<std::size_t>(d)];
  return out;
}

double first_dose(const Patient& p) { return *std::min_element(p.doses.begin(), p.doses.end()); }

StudyRow expected_row(const Patient& p) {
  StudyRow row;
  row.key = p.key;
  row[varprep::kTreatment] = p.treated ? 1.0 : -1.0;
  row[varprep::kAge] = p.age;
  row[varprep::kGender] = p.male ? -1.0 : 1.0;
  row[varprep::kRace] = p.ethnicity.find("WHITE") != std::string::npos ? 1.0 : -1.0;
  auto saps = present(p.saps);
  if (p.decoy == Decoy::kMissingDay) saps[kT2 - 1].reset();
  put_recipe(row, varprep::kSapsAvg, saps, p.t1);
  put_recipe(row, varprep::kSofaAvg, present(p.sofa), p.t1);
  row[varprep::kElixOverall] = p.elix;
  for (int f = 0; f < 9; ++f) row[varprep::kElixFirst + f] = p.flags[static_cast<std::size_t>(f)] ? 1.0 : -1.0;
  put_recipe(row, varprep::kCreatinineAvg, present(p.creat), p.t1);
  Daily in{}, out{};
  for (int d = 0; d < kDays; ++d) {
    in[static_cast<std::size_t>(d)] = p.in_a[static_cast<std::size_t>(d)] + p.in_b[static_cast<std::size_t>(d)];
    out[static_cast<std::size_t>(d)] = p.out_a[static_cast<std::size_t>(d)] + p.out_b[static_cast<std::size_t>(d)];
  }
  put_recipe(row, varprep::kFluidsInAvg, present(in), p.t1);
  put_recipe(row, varprep::kFluidsOutAvg, present(out), p.t1);
  for (int i = 0; i < 5; ++i) row[varprep::kBalanceAvg + i] = row[varprep::kFluidsInAvg + i] - row[varprep::kFluidsOutAvg + i];
  row[varprep::kVasopressors] = p.vaso ? 1.0 : -1.0;
  row[varprep::kVentilation] = p.vent ? 1.0 : -1.0;
  put_recipe(row, varprep::kAbpAvg, present(p.abp), p.t1);
  put_recipe(row, varprep::kMapAvg, present(p.map), p.t1);
  row[varprep::kMortality] = p.died ? 1.0 : -1.0;
  const double start = p.treated ? first_dose(p) : 24.0 * (p.t1 - 1);
  row[varprep::kLengthOfStay] = std::max(0.0, (p.out_hours - start) / 24.0);
  return row;
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string summary_text(const Patient& p, Generator& g) {
  if (p.decoy == Decoy::kPriorDiuretics) {
    return "ADMISSION DIAGNOSIS: sepsis\nMEDICATIONS ON ADMISSION:\nLasix 20 mg PO daily\naspirin 81 mg daily\n"
           "DISCHARGE MEDICATIONS:\nLasix 20 mg PO daily\n";
  }
  switch (g.index(3)) {
    case 0:
      return fmt::format(
          "ADMISSION DIAGNOSIS: sepsis\nMEDICATIONS ON ADMISSION:\naspirin 81 mg daily\nmetoprolol 25 mg bid\n"
          "DISCHARGE MEDICATIONS:\n{}\n",
          p.treated ? "furosemide 40 mg daily" : "metoprolol 25 mg bid");
    case 1:
      return fmt::format("Drugs on admission: none.\nHospital course: {}\n",
                         p.treated ? "diuresed with Lasix in the unit." : "antibiotics for urosepsis.");
    default:
      return "Patient admitted from the emergency department with sepsis. Treated with broad spectrum antibiotics.";
  }
}

struct Generated {
  std::vector<Patient> patients;
  Manifest manifest;
};

Generated generate(const SynthSpec& spec) {
  validate(spec);
  Generated out;
  Manifest& m = out.manifest;
  m.spec = spec;
  if (spec.n == 0) {
    m.expected_trace.assign(16, 0);
    return out;
  }
  Generator g(spec.seed);
  auto& patients = out.patients;
  patients.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    patients[i].key = cohort::PatientKey{1000 + static_cast<std::int64_t>(i), 20000 + static_cast<std::int64_t>(i),
                                         300000 + static_cast<std::int64_t>(i)};
  }

  std::vector<std::size_t> order(spec.n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), g.engine());
  for (std::size_t k = 0; k < spec.decoys_per_step * kDecoyKinds; ++k)
    patients[order[k]].decoy = static_cast<Decoy>(1 + k % kDecoyKinds);

  for (auto& p : patients) draw_covariates(p, spec, g);

  std::vector<std::size_t> study;
  for (std::size_t i = 0; i < spec.n; ++i)
    if (patients[i].decoy == Decoy::kNone) study.push_back(i);

  // Treatment assignment from pre-decision drivers.
  std::vector<double> z(spec.n, 0.0);
  for (const auto& d : spec.drivers) {
    std::vector<double> v(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) v[i] = expected_row(patients[i])[d.variable];
    double mean = 0.0;
    std::vector<double> sv;
    for (auto i : study) sv.push_back(v[i]);
    for (double x : sv) mean += x;
    mean /= static_cast<double>(std::max<std::size_t>(sv.size(), 1));
    const double sd = sample_sd(sv, mean);
    if (sd > 0)
      for (std::size_t i = 0; i < spec.n; ++i) z[i] += d.beta * (v[i] - mean) / sd;
  }
  auto mean_prob = [&](double a) {
    double s = 0.0;
    for (auto i : study) s += logistic(a + z[i]);
    return study.empty() ? logistic(a) : s / static_cast<double>(study.size());
  };
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < spec.prevalence ? lo : hi) = mid;
  }
  m.alpha = 0.5 * (lo + hi);

  for (std::size_t i = 0; i < spec.n; ++i) {
    auto& p = patients[i];
    p.treated = g.bernoulli(logistic(m.alpha + z[i]));
    if (p.treated) {
      const int day = 1 + static_cast<int>(g.index(3));
      const double first = round2(24.0 * (day - 1) + g.uniform(0.5, 23.5));
      p.doses.push_back(first);
      if (g.bernoulli(0.5)) p.doses.push_back(round2(first + g.uniform(6.0, 24.0)));
      p.t1 = day;
    }
  }

  // Centre the SAPS interaction on the overlap population, weighting each
  // study patient by e(1 - e) of the true assignment model, so the
  // treatment has no average effect where both arms are observed.
  double c = 0.0, wsum = 0.0;
  for (auto i : study) {
    const double e = logistic(m.alpha + z[i]);
    c += e * (1.0 - e) * expected_row(patients[i])[varprep::kSapsAvg];
    wsum += e * (1.0 - e);
  }
  c = wsum > 0.0 ? c / wsum : 0.0;
  m.saps_center = c;

  for (auto& p : patients) {
    const StudyRow r = expected_row(p);
    const double x1 = r[varprep::kTreatment];
    const double saps = std::isnan(r[varprep::kSapsAvg]) ? c : r[varprep::kSapsAvg] - c;
    const double eta = spec.mort_intercept + spec.mort_saps * saps + spec.mort_age * (p.age - 64.0) / 10.0 +
                       spec.mort_treatment * x1 + spec.mort_interaction * x1 * saps;
    p.died = g.bernoulli(logistic(eta)) ? 1 : 0;
    const double los =
        std::max(0.05, spec.los_base + spec.los_treatment * x1 + spec.los_saps * saps + spec.los_sd * g.normal());
    const double start = p.treated ? first_dose(p) : 24.0 * (p.t1 - 1);
    p.out_hours = std::max(24.0, round2(start + 24.0 * los));
    if (p.decoy == Decoy::kShortStay) p.out_hours = 18.0;
    p.summary = summary_text(p, g);
  }

  // Ground truth.
  std::vector<StudyRow> rows;
  for (const auto& p : patients) {
    if (p.decoy == Decoy::kNone) {
      rows.push_back(expected_row(p));
      if (p.treated) ++m.n_treated;
    } else {
      m.decoys.emplace_back(p.key, p.decoy);
    }
    if (p.decoy == Decoy::kMissingDay)
      m.expected_rejections.push_back({p.key, p.t1 == kT2 ? "missing x7" : "missing x8"});
  }
  m.n_study = rows.size();
  m.expected_group = varprep::StudyGroup(std::move(rows));

  const std::array<Decoy, 8> extract_fail{Decoy::kNoKey,    Decoy::kReadmitted, Decoy::kShortStay,
                                          Decoy::kMinor,    Decoy::kNoSepsis,   Decoy::kComfortCare,
                                          Decoy::kNoSummary, Decoy::kPriorDiuretics};
  std::vector<char> alive(spec.n, 1);
  for (std::size_t s = 0; s < extract_fail.size(); ++s) {
    std::size_t extracted = 0;
    for (const auto& p : patients) {
      bool pass = p.decoy != extract_fail[s];
      if (s >= 6) pass = pass && p.decoy != Decoy::kNoKey && p.decoy != Decoy::kNoSummary;
      extracted += pass;
    }
    m.expected_trace.push_back(extracted);
    if (s == 0) {
      for (std::size_t i = 0; i < spec.n; ++i) alive[i] = patients[i].decoy != Decoy::kNoKey;
      continue;
    }
    for (std::size_t i = 0; i < spec.n; ++i) {
      bool pass = patients[i].decoy != extract_fail[s];
      if (s >= 6) pass = pass && patients[i].decoy != Decoy::kNoSummary;
      alive[i] = alive[i] && pass;
    }
    m.expected_trace.push_back(static_cast<std::size_t>(std::count(alive.begin(), alive.end(), 1)));
  }
  for (std::size_t i = 0; i < spec.n; ++i) alive[i] = alive[i] && patients[i].decoy != Decoy::kIncomplete;
  m.expected_trace.push_back(static_cast<std::size_t>(std::count(alive.begin(), alive.end(), 1)));
  return out;
}

cohort::Extracts emit(const std::vector<Patient>& patients, Generator& g) {
  cohort::Extracts ex;
  auto& icu = ex.tables["icustays"];
  icu.header = {"subject_id", "hadm_id", "icustay_id", "age", "hospital_admissions", "icu_admissions",
                "icu_los_hours", "sepsis", "cmo"};
  auto& sum = ex.tables["summaries"];
  sum.header = {"hadm_id", "text"};
  auto& demo = ex.tables["demographics"];
  demo.header = {"subject_id", "gender", "ethnicity"};
  auto& elix = ex.tables["elixhauser"];
  elix.header = {"hadm_id", "overall", "chf", "arrhythmia", "valvular", "hypertension", "diabetes_uncomplicated",
                 "diabetes_complicated", "renal_failure", "liver_disease", "obesity"};
  const std::array<std::pair<const char*, Daily Patient::*>, 5> medians{
      {{"saps", &Patient::saps}, {"sofa", &Patient::sofa}, {"creatinine", &Patient::creat},
       {"abp", &Patient::abp}, {"map", &Patient::map}}};
  for (const auto& [name, member] : medians) ex.tables[name].header = {"icustay_id", "offset_hours", "value"};
  auto& fin = ex.tables["fluids_in"];
  fin.header = {"icustay_id", "offset_hours", "value", "item_id"};
  auto& fout = ex.tables["fluids_out"];
  fout.header = {"icustay_id", "offset_hours", "value"};
  auto& diu = ex.tables["diuretics"];
  diu.header = {"icustay_id", "offset_hours"};
  auto& vaso = ex.tables["vasopressors"];
  vaso.header = {"icustay_id", "given"};
  auto& vent = ex.tables["ventilation"];
  vent.header = {"icustay_id", "ventilated"};
  auto& outc = ex.tables["outcomes"];
  outc.header = {"icustay_id", "died_30d", "icu_out_hours"};

  const auto items = varprep::default_fluid_items();
  for (const auto& p : patients) {
    const std::string sid = std::to_string(p.key.subject_id), hid = std::to_string(p.key.hadm_id),
                      iid = std::to_string(p.key.icustay_id);
    icu.rows.push_back({sid, p.decoy == Decoy::kNoKey ? "" : hid, iid,
                        num(p.decoy == Decoy::kMinor ? 16.0 : p.age), p.decoy == Decoy::kReadmitted ? "2" : "1", "1",
                        num(p.out_hours), p.decoy == Decoy::kNoSepsis ? "0" : "1",
                        p.decoy == Decoy::kComfortCare ? "1" : "0"});
    if (p.decoy != Decoy::kNoSummary) sum.rows.push_back({hid, p.summary});
    demo.rows.push_back({sid, p.male ? "M" : "F", p.ethnicity});
    std::vector<std::string> e{hid, num(p.elix)};
    for (int f : p.flags) e.push_back(std::to_string(f));
    elix.rows.push_back(std::move(e));

    for (const auto& [name, member] : medians) {
      if (p.decoy == Decoy::kIncomplete && std::string_view(name) == "saps") continue;
      auto& t = ex.tables[name];
      const Daily& v = p.*member;
      for (int d = 1; d <= kDays; ++d) {
        if (p.decoy == Decoy::kMissingDay && d == kT2 && std::string_view(name) == "saps") continue;
        const double base = 24.0 * (d - 1);
        const double delta = round2(g.uniform(0.5, 3.0));
        std::array<double, 3> vals{v[static_cast<std::size_t>(d - 1)] - delta, v[static_cast<std::size_t>(d - 1)],
                                   v[static_cast<std::size_t>(d - 1)] + delta};
        std::shuffle(vals.begin(), vals.end(), g.engine());
        for (int k = 0; k < 3; ++k)
          t.rows.push_back({iid, num(round2(base + 1.0 + 7.5 * k + g.uniform(0.0, 6.0))), num(vals[static_cast<std::size_t>(k)])});
      }
    }
    for (int d = 1; d <= kDays; ++d) {
      const auto di = static_cast<std::size_t>(d - 1);
      const double base = 24.0 * (d - 1);
      fin.rows.push_back({iid, num(round2(base + 2.0 + g.uniform(0.0, 8.0))), num(p.in_a[di]),
                          std::to_string(items[g.index(items.size())])});
      fin.rows.push_back({iid, num(round2(base + 11.0 + g.uniform(0.0, 4.0))), num(round2(g.uniform(0.1, 0.5))),
                          std::to_string(kExcludedItem)});
      fin.rows.push_back({iid, num(round2(base + 16.0 + g.uniform(0.0, 7.0))), num(p.in_b[di]),
                          std::to_string(items[g.index(items.size())])});
      fout.rows.push_back({iid, num(round2(base + 3.0 + g.uniform(0.0, 8.0))), num(p.out_a[di])});
      fout.rows.push_back({iid, num(round2(base + 15.0 + g.uniform(0.0, 8.0))), num(p.out_b[di])});
    }
    for (double d : p.doses) diu.rows.push_back({iid, num(d)});
    vaso.rows.push_back({iid, std::to_string(p.vaso)});
    vent.rows.push_back({iid, std::to_string(p.vent)});
    outc.rows.push_back({iid, std::to_string(p.died), num(p.out_hours)});
  }
  return ex;
}

}  // namespace

std::string_view to_string(Decoy d) {
  switch (d) {
    case Decoy::kNone: return "none";
    case Decoy::kNoKey: return "no_key";
    case Decoy::kReadmitted: return "readmitted";
    case Decoy::kShortStay: return "short_stay";
    case Decoy::kMinor: return "minor";
    case Decoy::kNoSepsis: return "no_sepsis";
    case Decoy::kComfortCare: return "comfort_care";
    case Decoy::kNoSummary: return "no_summary";
    case Decoy::kPriorDiuretics: return "prior_diuretics";
    case Decoy::kIncomplete: return "incomplete";
    case Decoy::kMissingDay: return "missing_day";
  }
  return "";
}

bool is_pre_decision_variable(int v) {
  if (v < 2 || v > 56) return false;
  for (int first : {varprep::kSapsAvg, varprep::kSofaAvg, varprep::kCreatinineAvg, varprep::kFluidsInAvg,
                    varprep::kFluidsOutAvg, varprep::kBalanceAvg, varprep::kAbpAvg, varprep::kMapAvg}) {
    if (v == first || v == first + 2) return false;
  }
  return true;
}

void validate(const SynthSpec& spec) {
  auto bad = [](const std::string& why) { return ConfigError("InvalidSpec", why); };
  if (!(spec.prevalence > 0.0 && spec.prevalence < 1.0)) throw bad("prevalence must lie in (0,1)");
  if (spec.n > 0 && spec.n < spec.decoys_per_step * kDecoyKinds + 2)
    throw bad(fmt::format("n = {} leaves no room for {} decoys per step", spec.n, spec.decoys_per_step));
  if (!(spec.los_sd >= 0.0) || !std::isfinite(spec.los_base)) throw bad("length-of-stay parameters are invalid");
  for (const auto& d : spec.drivers) {
    if (!is_pre_decision_variable(d.variable))
      throw bad(fmt::format("x{} cannot drive treatment: it depends on the decision day", d.variable));
    if (!std::isfinite(d.beta)) throw bad("driver coefficient is not finite");
  }
}

SynthCohort synth_generate(const SynthSpec& spec) {
  Generated gen = generate(spec);
  Generator g(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  SynthCohort out;
  out.extracts = emit(gen.patients, g);
  out.manifest = std::move(gen.manifest);
  return out;
}

varprep::StudyGroup synth_study_group(const SynthSpec& spec) { return generate(spec).manifest.expected_group; }

csv::Table expected_trace_table(const Manifest& m) {
  csv::Table t;
  t.header = {"step", "surviving"};
  for (std::size_t i = 0; i < m.expected_trace.size(); ++i)
    t.rows.push_back({std::to_string(i + 1), std::to_string(m.expected_trace[i])});
  return t;
}

std::string manifest_text(const Manifest& m) {
  const auto& s = m.spec;
  std::string drivers;
  for (const auto& d : s.drivers) drivers += fmt::format("{}x{}:{}", drivers.empty() ? "" : ",", d.variable, num(d.beta));
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) { out += fmt::format("{} = {}\n", k, v); };
  line("seed", std::to_string(s.seed));
  line("n", std::to_string(s.n));
  line("decoys_per_step", std::to_string(s.decoys_per_step));
  line("prevalence", num(s.prevalence));
  line("drivers", drivers);
  line("severity_loading", num(s.severity_loading));
  line("mort_intercept", num(s.mort_intercept));
  line("mort_saps", num(s.mort_saps));
  line("mort_age", num(s.mort_age));
  line("mort_treatment", num(s.mort_treatment));
  line("mort_interaction", num(s.mort_interaction));
  line("los_base", num(s.los_base));
  line("los_treatment", num(s.los_treatment));
  line("los_saps", num(s.los_saps));
  line("los_sd", num(s.los_sd));
  line("alpha", num(m.alpha));
  line("saps_center", num(m.saps_center));
  line("n_study", std::to_string(m.n_study));
  line("n_treated", std::to_string(m.n_treated));
  return out;
}

void write_cohort(const std::filesystem::path& dir, const SynthCohort& cohort) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "extracts");
  fs::create_directories(dir / "truth");
  for (const auto& [name, table] : cohort.extracts.tables) csv::write_file(dir / "extracts" / (name + ".csv"), table);
  {
    std::ofstream f(dir / "truth" / "manifest.txt", std::ios::binary);
    f << manifest_text(cohort.manifest);
  }
  csv::write_file(dir / "truth" / "expected_trace.csv", expected_trace_table(cohort.manifest));
  csv::write_file(dir / "truth" / "expected_studygroup.csv", varprep::study_group_table(cohort.manifest.expected_group));
  csv::write_file(dir / "truth" / "expected_rejections.csv", varprep::rejections_table(cohort.manifest.expected_rejections));
  csv::Table decoys;
  decoys.header = {"subject_id", "hadm_id", "icustay_id", "decoy"};
  for (const auto& [k, d] : cohort.manifest.decoys)
    decoys.rows.push_back({std::to_string(k.subject_id), std::to_string(k.hadm_id), std::to_string(k.icustay_id),
                           std::string(to_string(d))});
  csv::write_file(dir / "truth" / "decoys.csv", decoys);
  std::ofstream p(dir / "pipeline.txt", std::ios::binary);
  p << cohort::default_pipeline_text();
}

}  // namespace strata::synth
