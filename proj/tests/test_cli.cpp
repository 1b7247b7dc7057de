#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bcap/ingest.hpp"
#include "bcap/rng.hpp"
#include "bcap/sampler.hpp"
#include "doctest.h"

using json = nlohmann::json;
using namespace bcap;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(BCAP_CLI_PATH) + " " + args + " > cli_stdout.txt 2> cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json slurp_json(const std::string& path) { return json::parse(slurp(path)); }

struct TempDir {
  fs::path dir;
  explicit TempDir(const std::string& name) : dir(name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string operator/(const std::string& sub) const {
    return (dir / sub).string();
  }
};

const char* kTinySampler = "--chains 1 --warmup 150 --draws 80";

}  // namespace

TEST_CASE("cli: simulate writes a complete, reproducible dataset") {
  TempDir t("cli_sim");
  const std::string out = t / "a";
  REQUIRE(run_cli("simulate --seed 42 --out " + out) == 0);
  for (const char* f :
       {"signals.csv", "covariates.csv", "truth.json", "manifest.json"})
    CHECK(fs::exists(fs::path(out) / f));

  // the dataset reloads through the ingest path (intercept re-added)
  const TimeSeriesDataset ds =
      load(out + "/signals.csv", out + "/covariates.csv", true);
  CHECK(ds.p == 5);
  CHECK(ds.q == 3);
  CHECK(ds.n() == 100);
  CHECK(ds.T(0) == 20);

  const json man = slurp_json(out + "/manifest.json");
  CHECK(man.at("command") == "simulate");
  CHECK(man.at("version") == json(BCAP_VERSION_STR));
  CHECK(man.at("config").at("seed") == 42);
  CHECK(man.at("failed_seeds").empty());
  CHECK(man.at("config_hash").get<std::string>().size() == 16);
  CHECK(man.at("wall_time_seconds").get<double>() >= 0.0);

  // identical rerun; different seed differs
  const std::string out2 = t / "b";
  REQUIRE(run_cli("simulate --seed 42 --out " + out2) == 0);
  CHECK(slurp(out + "/signals.csv") == slurp(out2 + "/signals.csv"));
  CHECK(slurp(out + "/truth.json") == slurp(out2 + "/truth.json"));
  const std::string out3 = t / "c";
  REQUIRE(run_cli("simulate --seed 43 --out " + out3) == 0);
  CHECK(slurp(out + "/signals.csv") != slurp(out3 + "/signals.csv"));

  // config file route with flag override: flags win
  const std::string cfg = t / "sim.json";
  {
    std::ofstream f(cfg);
    f << R"({"n": 7, "T": 6, "seed": 1})";
  }
  const std::string out4 = t / "d";
  REQUIRE(run_cli("simulate --config " + cfg + " --seed 42 --out " + out4) == 0);
  const json man4 = slurp_json(out4 + "/manifest.json");
  CHECK(man4.at("config").at("seed") == 42);  // flag beat the file
  CHECK(man4.at("config").at("n") == 7);
  const TimeSeriesDataset small =
      load(out4 + "/signals.csv", out4 + "/covariates.csv", true);
  CHECK(small.n() == 7);
  CHECK(small.T(0) == 6);
}

TEST_CASE("cli: config validation rejects unknown keys and bad types") {
  TempDir t("cli_cfg");
  const std::string bad = t / "bad.json";
  {
    std::ofstream f(bad);
    f << R"({"n": 8, "bogus": 1})";
  }
  CHECK(run_cli("simulate --config " + bad + " --out " + (t / "x")) == 1);
  CHECK(slurp("cli_stderr.txt").find("unknown key 'bogus'") !=
        std::string::npos);

  const std::string badtype = t / "badtype.json";
  {
    std::ofstream f(badtype);
    f << R"({"n": "eight"})";
  }
  CHECK(run_cli("simulate --config " + badtype) == 1);
  CHECK(slurp("cli_stderr.txt").find("wrong type") != std::string::npos);

  const std::string notjson = t / "notjson.json";
  {
    std::ofstream f(notjson);
    f << "{nope";
  }
  CHECK(run_cli("simulate --config " + notjson) == 1);

  // missing required inputs and nonexistent files fail loudly
  CHECK(run_cli("fit --out " + (t / "y")) == 1);
  CHECK(slurp("cli_stderr.txt").find("requires 'signals'") != std::string::npos);
  CHECK(run_cli("fit --signals nope.csv --covariates nope2.csv") == 1);
  CHECK(run_cli("frobnicate") != 0);  // unknown subcommand
}

TEST_CASE("cli: fit writes draws, summary, and manifest") {
  TempDir t("cli_fit");
  const std::string sim = t / "sim";
  REQUIRE(run_cli("simulate --seed 11 --out " + sim) == 0);

  const std::string out = t / "fit";
  REQUIRE(run_cli("fit --signals " + sim + "/signals.csv --covariates " + sim +
                  "/covariates.csv --d 2 --seed 3 --out " + out + " " +
                  kTinySampler) == 0);

  const json s = slurp_json(out + "/summary.json");
  CHECK(s.at("p") == 5);
  CHECK(s.at("d") == 2);
  CHECK(s.at("n") == 100);
  CHECK(s.at("q") == 3);
  CHECK(s.at("bonferroni") == false);
  // gamma (5x2) + B (2x3) + lambda (100x2) + sigma
  CHECK(s.at("params").size() == 10 + 6 + 200 + 1);
  CHECK(s.at("v_between").size() == 2);
  // components are reported in decreasing between-subject variability
  CHECK(s.at("v_between")[0].get<double>() >=
        s.at("v_between")[1].get<double>());
  CHECK(s.at("log_dfd").get<double>() >= 0.0);
  CHECK(s.at("accept_rates").size() == 1);
  CHECK(s.at("alignment_reference").contains("chain"));

  // stored draws reload to the same shape the summary reports
  const PosteriorDraws pd = read_draws_csv({out + "/draws_chain_1.csv"});
  CHECK(pd.p == 5);
  CHECK(pd.d == 2);
  CHECK(pd.total_draws() == 80);

  const json man = slurp_json(out + "/manifest.json");
  CHECK(man.at("command") == "fit");
  CHECK(man.at("outputs").size() == 2);  // one chain csv + summary.json

  // same seed, same outputs, bit for bit
  const std::string out2 = t / "fit2";
  REQUIRE(run_cli("fit --signals " + sim + "/signals.csv --covariates " + sim +
                  "/covariates.csv --d 2 --seed 3 --out " + out2 + " " +
                  kTinySampler) == 0);
  CHECK(slurp(out + "/summary.json") == slurp(out2 + "/summary.json"));
  CHECK(slurp(out + "/draws_chain_1.csv") == slurp(out2 + "/draws_chain_1.csv"));

  // invalid dimension is rejected
  CHECK(run_cli("fit --signals " + sim + "/signals.csv --covariates " + sim +
                "/covariates.csv --d 9 --out " + (t / "z") + " " +
                kTinySampler) == 1);
}

TEST_CASE("cli: bonferroni flag widens only the loading intervals") {
  TempDir t("cli_bonf");
  const std::string sim = t / "sim";
  REQUIRE(run_cli("simulate --seed 5 --out " + sim) == 0);
  const std::string base = " --signals " + sim + "/signals.csv --covariates " +
                           sim + "/covariates.csv --d 2 --seed 2 " +
                           kTinySampler;
  const std::string plain = t / "plain", bonf = t / "bonf";
  REQUIRE(run_cli("fit" + base + " --out " + plain) == 0);
  REQUIRE(run_cli("fit" + base + " --bonferroni --out " + bonf) == 0);

  const json sp = slurp_json(plain + "/summary.json");
  const json sb = slurp_json(bonf + "/summary.json");
  CHECK(sb.at("bonferroni") == true);
  auto find = [](const json& s, const std::string& name) -> json {
    for (const auto& ps : s.at("params"))
      if (ps.at("name") == name) return ps;
    FAIL("missing parameter " << name);
    return {};
  };
  const json gp = find(sp, "gamma_1_1"), gb = find(sb, "gamma_1_1");
  CHECK(gb.at("lower").get<double>() <= gp.at("lower").get<double>());
  CHECK(gb.at("upper").get<double>() >= gp.at("upper").get<double>());
  // B intervals stay at the plain level
  const json bp = find(sp, "B_1_2"), bb = find(sb, "B_1_2");
  CHECK(bb.at("lower") == bp.at("lower"));
  CHECK(bb.at("upper") == bp.at("upper"));
}

TEST_CASE("cli: select sweeps candidate dimensions against the cutoff") {
  TempDir t("cli_sel");
  const std::string sim = t / "sim";
  REQUIRE(run_cli("simulate --seed 21 --out " + sim) == 0);
  const std::string base = " --signals " + sim + "/signals.csv --covariates " +
                           sim + "/covariates.csv --seed 4 " + kTinySampler;

  const std::string out = t / "sel";
  REQUIRE(run_cli("select" + base + " --d 2 --cutoff 1e12 --out " + out) == 0);
  const json rep = slurp_json(out + "/selection.json");
  CHECK(rep.at("chosen_d") == 2);  // everything qualifies, largest wins
  CHECK(rep.at("candidates").size() == 2);
  CHECK(rep.at("candidates")[0].at("dfd_mean") == 0.0);

  const std::string strict = t / "strict";
  REQUIRE(run_cli("select" + base + " --d 2 --cutoff 0 --out " + strict) == 0);
  CHECK(slurp_json(strict + "/selection.json").at("chosen_d") == 1);

  // d_max is required
  CHECK(run_cli("select" + base + " --out " + (t / "x")) == 1);
  CHECK(slurp("cli_stderr.txt").find("requires 'd_max'") != std::string::npos);
}

TEST_CASE("cli: summarize re-summarizes stored draws") {
  TempDir t("cli_sum");
  const std::string sim = t / "sim";
  REQUIRE(run_cli("simulate --seed 31 --out " + sim) == 0);
  const std::string out = t / "fit";
  REQUIRE(run_cli("fit --signals " + sim + "/signals.csv --covariates " + sim +
                  "/covariates.csv --d 2 --seed 6 --out " + out + " " +
                  kTinySampler) == 0);

  const std::string sum = t / "sum";
  REQUIRE(run_cli("summarize " + out + "/draws_chain_1.csv --out " + sum) == 0);
  const json s = slurp_json(sum + "/summary.json");
  const json fit_s = slurp_json(out + "/summary.json");
  CHECK(s.at("params").size() == fit_s.at("params").size());
  CHECK_FALSE(s.contains("accept_rates"));  // not stored in the draw CSVs

  // re-summarizing aligned, ordered draws agrees with the fit's summary
  for (size_t i = 0; i < s.at("params").size(); ++i) {
    CHECK(s.at("params")[i].at("name") == fit_s.at("params")[i].at("name"));
    CHECK(s.at("params")[i].at("mean").get<double>() ==
          doctest::Approx(fit_s.at("params")[i].at("mean").get<double>())
              .epsilon(1e-12));
  }

  CHECK(run_cli("summarize --out " + (t / "x")) == 1);  // no files given
}

TEST_CASE("cli: coverage experiment writes a coverage table") {
  TempDir t("cli_cov");
  const std::string cfg = t / "cov.json";
  {
    std::ofstream f(cfg);
    f << R"({"n": 8, "T": 10, "replications": 2, "chains": 1,
             "warmup": 150, "draws": 80, "seed": 5})";
  }
  const std::string out = t / "cov";
  REQUIRE(run_cli("coverage --config " + cfg + " --out " + out) == 0);

  const std::string csv = slurp(out + "/coverage.csv");
  CHECK(csv.rfind("n,T,parameter,coverage\n", 0) == 0);
  CHECK(csv.find("8,10,gamma_1_1,") != std::string::npos);
  CHECK(csv.find("8,10,sigma,") != std::string::npos);
  CHECK(fs::exists(fs::path(out) / "replications.csv"));
  CHECK(slurp_json(out + "/manifest.json").at("failed_seeds").empty());

  // a scenario in which no replication can fit exits nonzero and reports
  // every seed in the manifest
  const std::string badcfg = t / "bad.json";
  {
    std::ofstream f(badcfg);
    f << R"({"n": 8, "T": 10, "d": 9, "replications": 2, "chains": 1,
             "warmup": 100, "draws": 50, "seed": 5})";
  }
  const std::string badout = t / "bad";
  CHECK(run_cli("coverage --config " + badcfg + " --out " + badout) == 1);
  const json man = slurp_json(badout + "/manifest.json");
  CHECK(man.at("failed_seeds") == json({5, 6}));
}

TEST_CASE("cli: dimension-selection accuracy study reports chosen values") {
  TempDir t("cli_dfd");
  const std::string cfg = t / "dfd.json";
  {
    std::ofstream f(cfg);
    f << R"({"n": 6, "T": 12, "d_max": 2, "cutoff": 1e12, "replications": 2,
             "chains": 1, "warmup": 150, "draws": 80, "seed": 9})";
  }
  const std::string out = t / "out";
  REQUIRE(run_cli("dfd-accuracy --config " + cfg + " --out " + out) == 0);
  const json r = slurp_json(out + "/dfd_accuracy.json");
  CHECK(r.at("completed") == 2);
  CHECK(r.at("chosen").size() == 2);
  CHECK(r.at("proportion_correct") == 1.0);
  CHECK(fs::exists(fs::path(out) / "replications.csv"));
}

TEST_CASE("cli: ess-thin shortens autocorrelated series before fitting") {
  TempDir t("cli_thin");
  // build a slow AR(1) dataset: effective length well below T
  const int p = 3, n = 4, T = 400;
  TimeSeriesDataset ds;
  ds.p = p;
  ds.q = 2;
  Rng rng(99);
  for (int i = 0; i < n; ++i) {
    Matrix y(T, p);
    for (int j = 0; j < p; ++j) {
      double prev = draw_normal(rng);
      for (int l = 0; l < T; ++l) {
        prev = 0.9 * prev + draw_normal(rng);
        y(l, j) = prev;
      }
    }
    ds.signals.push_back(y);
    ds.covariates.push_back(Vector::Constant(2, i % 2 == 0 ? 1.0 : 0.0));
    ds.covariates.back()(0) = 1.0;
    ds.ids.push_back("s" + std::to_string(i + 1));
  }
  write_dataset(ds, t / "sig.csv", t / "cov.csv", true);

  const std::string out = t / "fit";
  REQUIRE(run_cli("fit --signals " + (t / "sig.csv") + " --covariates " +
                  (t / "cov.csv") + " --d 1 --ess-thin --seed 2 --out " + out +
                  " " + kTinySampler) == 0);
  const json s = slurp_json(out + "/summary.json");
  REQUIRE(s.contains("thinned_to"));
  const int target = s.at("thinned_to").get<int>();
  CHECK(target >= 2);
  CHECK(target < T / 4);  // rho = 0.9 implies a large thinning factor
  CHECK(s.at("n") == n);
}
