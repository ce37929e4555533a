#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "strata/config.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace strata;

namespace {

const fs::path kFixture = STRATA_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("strata_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code = -1;
  std::string err;
};

Run invoke(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + STRATA_BINARY + "\" " + args + " 2> \"" + err.string() + "\" > /dev/null";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(err);
  std::stringstream ss;
  ss << f.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("configuration keys") {
  RunConfig c;
  apply_config_text(c, "# comment\nseed = 9\np_enter = 0.1\nstages = cohort, varprep\n\ncandidates = 2-5, x10\n");
  CHECK(c.seed == 9);
  CHECK(c.p_enter == 0.1);
  CHECK(c.stages == std::vector<std::string>{"cohort", "varprep"});
  CHECK(c.candidates == std::vector<int>{2, 3, 4, 5, 10});
  CHECK(c.stage_enabled("varprep"));
  CHECK_FALSE(c.stage_enabled("ml"));
  CHECK(c.effective(c.gp_seed) == 9);
  apply_setting(c, "gp_seed", "4");
  CHECK(c.effective(c.gp_seed) == 4);
  apply_setting(c, "stages", "all");
  CHECK(c.stages == kAllStages);

  CHECK_KIND(apply_setting(c, "no_such_key", "1"), "UnknownKey");
  CHECK_KIND(apply_setting(c, "p_enter", "1.5"), "BadValue");
  CHECK_KIND(apply_setting(c, "seed", "abc"), "BadValue");
  CHECK_KIND(apply_setting(c, "stages", "cohort,bogus"), "BadValue");
  CHECK_KIND(apply_setting(c, "candidates", "1-4"), "BadValue");
  CHECK_KIND(apply_setting(c, "ttest", "z"), "BadValue");
  CHECK_KIND(apply_config_text(c, "seed 4\n"), "BadLine");
}

TEST_CASE("configuration text round trip") {
  RunConfig a;
  apply_config_text(a, "seed = 77\nkmeans_k = 3\ngp_generations = 4\nyates = true\nttest = student\n");
  RunConfig b;
  apply_config_text(b, config_text(a));
  CHECK(config_text(b) == config_text(a));
  for (const auto& k : config_keys()) CHECK(config_text(a).find(k + " = ") != std::string::npos);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  CHECK(invoke("", dir).code == 2);
  CHECK(invoke("bogus", dir).code == 2);
  CHECK(invoke("--set nonsense=1 synth", dir).code == 2);

  const auto missing = invoke("--out \"" + (dir / "o").string() + "\" run-all --extracts \"" + (dir / "nope").string() + "\"", dir);
  CHECK(missing.code == 2);
  CHECK(missing.err.find("stage cohort: extracts directory") != std::string::npos);

  const auto nogroup = invoke("--out \"" + (dir / "o").string() + "\" outcome run", dir);
  CHECK(nogroup.code == 2);

  // Malformed extract: a data error.
  fs::create_directories(dir / "bad");
  fs::copy(kFixture / "extracts", dir / "bad", fs::copy_options::recursive);
  std::ofstream(dir / "bad" / "icustays.csv") << "subject_id,hadm_id\n1,\"2\n";
  const auto bad = invoke("--out \"" + (dir / "o2").string() + "\" run-all --extracts \"" + (dir / "bad").string() + "\"", dir);
  CHECK(bad.code == 3);
  fs::remove_all(dir);
}

TEST_CASE("stage gating") {
  const auto dir = scratch("stages");
  const auto out = dir / "out";
  const auto r = invoke("--out \"" + out.string() + "\" --stages cohort,varprep run-all --extracts \"" +
                            (kFixture / "extracts").string() + "\"",
                        dir);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "cohort_trace.csv"));
  CHECK(fs::exists(out / "studygroup.csv"));
  CHECK_FALSE(fs::exists(out / "strata.csv"));
  CHECK_FALSE(fs::exists(out / "outcome_models.csv"));

  // Later stages pick up where the earlier run stopped.
  const auto r2 = invoke("--out \"" + out.string() + "\" --stages propensity,outcome run-all", dir);
  REQUIRE(r2.code == 0);
  CHECK(fs::exists(out / "strata.csv"));
  CHECK(fs::exists(out / "outcome_models.csv"));
  CHECK_FALSE(fs::exists(out / "clusters.csv"));
  fs::remove_all(dir);
}

TEST_CASE("run-all is reproducible") {
  const auto dir = scratch("repro");
  const std::string common = " --set gp_generations=3 --set gp_population=30 run-all --extracts \"" +
                             (kFixture / "extracts").string() + "\"";
  REQUIRE(invoke("--seed 5 --out \"" + (dir / "a").string() + "\"" + common, dir).code == 0);
  REQUIRE(invoke("--seed 5 --out \"" + (dir / "b").string() + "\"" + common, dir).code == 0);
  const auto a = tree(dir / "a");
  const auto b = tree(dir / "b");
  CHECK(a.size() >= 20);
  CHECK(a == b);
  for (const auto& f : {"studygroup.csv", "strata.csv", "outcome_models.csv", "balance.csv", "gp_models.csv",
                        "counterfactual.csv", "config_used.txt"})
    CHECK_MESSAGE(a.count(f) == 1, f);
  fs::remove_all(dir);
}

TEST_CASE("bundled fixture matches the generator") {
  const auto dir = scratch("fixture");
  REQUIRE(invoke("--out \"" + (dir / "gen").string() + "\" synth", dir).code == 0);
  CHECK(tree(dir / "gen") == tree(kFixture));
  fs::remove_all(dir);
}
