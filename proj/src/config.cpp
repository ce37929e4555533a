#include "strata/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "strata/csv.hpp"
#include "strata/error.hpp"

namespace strata {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(s)};
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(sep) : "") + v[i];
  return out;
}

ConfigError bad_value(std::string_view key, std::string_view value, std::string_view why) {
  return ConfigError("BadValue", fmt::format("{} = '{}': {}", key, value, why));
}

double to_double(std::string_view key, std::string_view v) {
  auto x = csv::parse_number(v);
  if (!x || !std::isfinite(*x)) throw bad_value(key, v, "not a number");
  return *x;
}

long long to_int(std::string_view key, std::string_view v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw bad_value(key, v, "not an integer");
  return out;
}

std::uint64_t to_seed(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw bad_value(key, v, "not a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw bad_value(key, v, "expected true or false");
}

double probability(std::string_view key, std::string_view v) {
  const double p = to_double(key, v);
  if (p < 0.0 || p > 1.0) throw bad_value(key, v, "must lie in [0,1]");
  return p;
}

int positive(std::string_view key, std::string_view v) {
  const auto x = to_int(key, v);
  if (x < 1 || x > 1'000'000'000) throw bad_value(key, v, "must be a positive integer");
  return static_cast<int>(x);
}

// "2-56" or "5,10,15" or a mix; "x" prefixes are accepted.
std::vector<int> to_variables(std::string_view key, std::string_view v) {
  std::vector<int> out;
  for (auto item : split(v, ',')) {
    auto strip = [](std::string s) { return !s.empty() && (s[0] == 'x' || s[0] == 'X') ? s.substr(1) : s; };
    const auto dash = item.find('-');
    int lo = 0, hi = 0;
    if (dash == std::string::npos) {
      lo = hi = static_cast<int>(to_int(key, strip(item)));
    } else {
      lo = static_cast<int>(to_int(key, strip(trim(item.substr(0, dash)))));
      hi = static_cast<int>(to_int(key, strip(trim(item.substr(dash + 1)))));
    }
    if (lo < 1 || hi > varprep::kNumVariables || lo > hi) throw bad_value(key, v, "variables range over 1..58");
    for (int x = lo; x <= hi; ++x) out.push_back(x);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string variables_text(const std::vector<int>& v) {
  std::vector<std::string> parts;
  for (int x : v) parts.push_back(std::to_string(x));
  return join(parts, ",");
}

std::string num(double v) { return csv::format_number(v); }

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Key number_key(std::string name, T RunConfig::*field, std::function<T(std::string_view, std::string_view)> parse) {
  return {name, [=](RunConfig& c, std::string_view v) { c.*field = parse(name, v); },
          [=](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return num(c.*field);
            else return std::to_string(c.*field);
          }};
}

Key seed_key(std::string name, std::optional<std::uint64_t> RunConfig::*field) {
  return {name, [=](RunConfig& c, std::string_view v) { c.*field = to_seed(name, v); },
          [=](const RunConfig& c) { return std::to_string(c.effective(c.*field)); }};
}

Key path_key(std::string name, std::filesystem::path RunConfig::*field) {
  return {name, [=](RunConfig& c, std::string_view v) { c.*field = std::filesystem::path(std::string(v)); },
          [=](const RunConfig& c) { return (c.*field).generic_string(); }};
}

Key bool_key(std::string name, bool RunConfig::*field) {
  return {name, [=](RunConfig& c, std::string_view v) { c.*field = to_bool(name, v); },
          [=](const RunConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

template <class T>
Key gp_key(std::string name, T evoml::GpConfig::*field, std::function<T(std::string_view, std::string_view)> parse) {
  return {name, [=](RunConfig& c, std::string_view v) { c.gp.*field = parse(name, v); },
          [=](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return num(c.gp.*field);
            else return std::to_string(c.gp.*field);
          }};
}

Key synth_key(std::string name, double synth::SynthSpec::*field) {
  return {name, [=](RunConfig& c, std::string_view v) { c.synth.*field = to_double(name, v); },
          [=](const RunConfig& c) { return num(c.synth.*field); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = [] {
    std::vector<Key> k;
    k.push_back(path_key("extracts_dir", &RunConfig::extracts_dir));
    k.push_back(path_key("out_dir", &RunConfig::out_dir));
    k.push_back(path_key("pipeline_file", &RunConfig::pipeline_file));
    k.push_back(path_key("group_file", &RunConfig::group_file));
    k.push_back(path_key("strata_file", &RunConfig::strata_file));
    k.push_back({"stages",
                 [](RunConfig& c, std::string_view v) {
                   auto s = split(v, ',');
                   if (s.size() == 1 && s[0] == "all") s = kAllStages;
                   for (const auto& st : s)
                     if (std::find(kAllStages.begin(), kAllStages.end(), st) == kAllStages.end())
                       throw bad_value("stages", v, fmt::format("unknown stage '{}'", st));
                   c.stages = s;
                 },
                 [](const RunConfig& c) { return join(c.stages, ","); }});
    k.push_back({"seed", [](RunConfig& c, std::string_view v) { c.seed = to_seed("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    k.push_back(seed_key("synth_seed", &RunConfig::synth_seed));
    k.push_back(seed_key("kmeans_seed", &RunConfig::kmeans_seed));
    k.push_back(seed_key("gp_seed", &RunConfig::gp_seed));
    k.push_back(seed_key("split_seed", &RunConfig::split_seed));
    k.push_back({"naive_headings",
                 [](RunConfig& c, std::string_view v) { c.naive_headings = split(v, ';'); },
                 [](const RunConfig& c) { return join(c.naive_headings, ";"); }});
    k.push_back({"default_t1", [](RunConfig& c, std::string_view v) { c.timepoints.default_t1 = positive("default_t1", v); },
                 [](const RunConfig& c) { return std::to_string(c.timepoints.default_t1); }});
    k.push_back({"t2", [](RunConfig& c, std::string_view v) { c.timepoints.t2 = positive("t2", v); },
                 [](const RunConfig& c) { return std::to_string(c.timepoints.t2); }});
    k.push_back({"t3", [](RunConfig& c, std::string_view v) { c.timepoints.t3 = positive("t3", v); },
                 [](const RunConfig& c) { return std::to_string(c.timepoints.t3); }});
    k.push_back({"mandatory", [](RunConfig& c, std::string_view v) { c.mandatory = to_variables("mandatory", v); },
                 [](const RunConfig& c) { return variables_text(c.mandatory); }});
    k.push_back({"candidates",
                 [](RunConfig& c, std::string_view v) {
                   auto vars = to_variables("candidates", v);
                   for (int x : vars)
                     if (x < 2 || x > 56) throw bad_value("candidates", v, "candidates range over 2..56");
                   c.candidates = vars;
                 },
                 [](const RunConfig& c) { return variables_text(c.candidates); }});
    k.push_back(number_key<double>("p_enter", &RunConfig::p_enter, probability));
    k.push_back(bool_key("second_phase", &RunConfig::second_phase));
    k.push_back(bool_key("squares", &RunConfig::squares));
    k.push_back(number_key<double>("refine_fraction", &RunConfig::refine_fraction, probability));
    k.push_back(number_key<int>("refine_passes", &RunConfig::refine_passes, positive));
    k.push_back(number_key<double>("refine_gate", &RunConfig::refine_gate, probability));
    k.push_back({"ttest",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "welch") c.ttest = stats::TTestVariant::kWelch;
                   else if (v == "student") c.ttest = stats::TTestVariant::kStudent;
                   else throw bad_value("ttest", v, "expected welch or student");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.ttest == stats::TTestVariant::kWelch ? "welch" : "student");
                 }});
    k.push_back(bool_key("yates", &RunConfig::yates));
    k.push_back({"split_variable",
                 [](RunConfig& c, std::string_view v) {
                   auto vars = to_variables("split_variable", v);
                   if (vars.size() != 1) throw bad_value("split_variable", v, "expected one variable");
                   c.split_variable = vars.front();
                 },
                 [](const RunConfig& c) { return std::to_string(c.split_variable); }});
    k.push_back(number_key<int>("kmeans_k", &RunConfig::kmeans_k, positive));
    k.push_back(gp_key<int>("gp_population", &evoml::GpConfig::population_size, positive));
    k.push_back(gp_key<int>("gp_generations", &evoml::GpConfig::generations,
                            [](std::string_view key, std::string_view v) {
                              const auto g = to_int(key, v);
                              if (g < 0 || g > 100000) throw bad_value(key, v, "must be in 0..100000");
                              return static_cast<int>(g);
                            }));
    k.push_back(gp_key<double>("gp_p_reproduction", &evoml::GpConfig::p_reproduction, probability));
    k.push_back(gp_key<double>("gp_p_crossover", &evoml::GpConfig::p_crossover, probability));
    k.push_back(gp_key<double>("gp_p_mutation", &evoml::GpConfig::p_mutation, probability));
    k.push_back(gp_key<int>("gp_max_depth", &evoml::GpConfig::max_depth, positive));
    k.push_back(gp_key<int>("gp_init_depth", &evoml::GpConfig::init_depth, positive));
    k.push_back(gp_key<int>("gp_mutation_depth", &evoml::GpConfig::mutation_depth, positive));
    k.push_back(gp_key<int>("gp_tournament", &evoml::GpConfig::tournament_size, positive));
    k.push_back(gp_key<double>("gp_constant_range", &evoml::GpConfig::constant_range, to_double));
    k.push_back(number_key<double>("train_fraction", &RunConfig::train_fraction, probability));
    k.push_back({"synth_n",
                 [](RunConfig& c, std::string_view v) {
                   const auto n = to_int("synth_n", v);
                   if (n < 0) throw bad_value("synth_n", v, "must be non-negative");
                   c.synth.n = static_cast<std::size_t>(n);
                 },
                 [](const RunConfig& c) { return std::to_string(c.synth.n); }});
    k.push_back({"synth_decoys",
                 [](RunConfig& c, std::string_view v) {
                   const auto n = to_int("synth_decoys", v);
                   if (n < 0) throw bad_value("synth_decoys", v, "must be non-negative");
                   c.synth.decoys_per_step = static_cast<std::size_t>(n);
                 },
                 [](const RunConfig& c) { return std::to_string(c.synth.decoys_per_step); }});
    k.push_back({"synth_drivers",
                 [](RunConfig& c, std::string_view v) {
                   std::vector<synth::Driver> drivers;
                   for (const auto& item : split(v, ',')) {
                     const auto colon = item.find(':');
                     if (colon == std::string::npos) throw bad_value("synth_drivers", v, "expected xK:beta items");
                     auto vars = to_variables("synth_drivers", item.substr(0, colon));
                     if (vars.size() != 1) throw bad_value("synth_drivers", v, "one variable per driver");
                     drivers.push_back({vars.front(), to_double("synth_drivers", item.substr(colon + 1))});
                   }
                   c.synth.drivers = drivers;
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (const auto& d : c.synth.drivers) parts.push_back(fmt::format("x{}:{}", d.variable, num(d.beta)));
                   return join(parts, ",");
                 }});
    k.push_back(synth_key("synth_prevalence", &synth::SynthSpec::prevalence));
    k.push_back(synth_key("synth_severity_loading", &synth::SynthSpec::severity_loading));
    k.push_back(synth_key("synth_mort_intercept", &synth::SynthSpec::mort_intercept));
    k.push_back(synth_key("synth_mort_saps", &synth::SynthSpec::mort_saps));
    k.push_back(synth_key("synth_mort_age", &synth::SynthSpec::mort_age));
    k.push_back(synth_key("synth_mort_treatment", &synth::SynthSpec::mort_treatment));
    k.push_back(synth_key("synth_mort_interaction", &synth::SynthSpec::mort_interaction));
    k.push_back(synth_key("synth_los_base", &synth::SynthSpec::los_base));
    k.push_back(synth_key("synth_los_treatment", &synth::SynthSpec::los_treatment));
    k.push_back(synth_key("synth_los_saps", &synth::SynthSpec::los_saps));
    k.push_back(synth_key("synth_los_sd", &synth::SynthSpec::los_sd));
    return k;
  }();
  return k;
}

}  // namespace

bool RunConfig::stage_enabled(std::string_view stage) const {
  return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const std::string k = trim(key), v = trim(value);
  for (const auto& entry : keys()) {
    if (entry.name == k) {
      entry.set(config, v);
      return;
    }
  }
  throw ConfigError("UnknownKey", fmt::format("unknown configuration key '{}'", k));
}

void apply_config_text(RunConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("BadLine", fmt::format("config line {}: expected 'key = value'", no));
    apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("MissingPath", fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(config, ss.str());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

std::string config_text(const RunConfig& config, bool with_paths) {
  static const std::vector<std::string> paths{"extracts_dir", "out_dir", "pipeline_file", "group_file", "strata_file"};
  std::string out;
  for (const auto& k : keys()) {
    if (!with_paths && std::find(paths.begin(), paths.end(), k.name) != paths.end()) continue;
    out += fmt::format("{} = {}\n", k.name, k.get(config));
  }
  return out;
}

}  // namespace strata
