#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bcap/evaluate.hpp"
#include "bcap/ingest.hpp"
#include "bcap/selection.hpp"
#include "bcap/simulate.hpp"

#ifndef BCAP_VERSION
#define BCAP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bcap;

namespace {

// ---------------------------------------------------------------- config ---

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw ParseError("config: " + path + ": " + std::string(e.what()));
  }
  if (!cfg.is_object())
    throw ValidationError("config: top level must be a JSON object");
  return cfg;
}

enum class Kind { Int, Uint, Num, Bool, Str, StrList };

struct Key {
  const char* name;
  Kind kind;
};

// reject unknown keys and wrong types before any work happens
void validate_schema(const json& cfg, const std::string& command,
                     const std::vector<Key>& allowed) {
  for (const auto& [key, value] : cfg.items()) {
    const Key* match = nullptr;
    for (const auto& k : allowed)
      if (key == k.name) {
        match = &k;
        break;
      }
    if (!match)
      throw ValidationError("config: unknown key '" + key + "' for command '" +
                            command + "'");
    bool ok = false;
    switch (match->kind) {
      case Kind::Int:
        ok = value.is_number_integer() || value.is_number_unsigned();
        break;
      case Kind::Uint:
        ok = value.is_number_unsigned() ||
             (value.is_number_integer() && value.get<long long>() >= 0);
        break;
      case Kind::Num:
        ok = value.is_number();
        break;
      case Kind::Bool:
        ok = value.is_boolean();
        break;
      case Kind::Str:
        ok = value.is_string();
        break;
      case Kind::StrList:
        ok = value.is_array();
        if (ok)
          for (const auto& v : value)
            if (!v.is_string()) ok = false;
        break;
    }
    if (!ok)
      throw ValidationError("config: key '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& cfg, const char* key, T fallback) {
  return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
}

std::string require_str(const json& cfg, const char* key,
                        const std::string& command) {
  if (!cfg.contains(key))
    throw ValidationError("config: command '" + command + "' requires '" +
                          std::string(key) + "'");
  return cfg.at(key).get<std::string>();
}

// -------------------------------------------------------------- manifest ---

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

struct Manifest {
  std::string command;
  json config;  // fully resolved (defaults + file + flag overrides)
  std::vector<std::string> outputs;
  std::vector<std::uint64_t> failed_seeds;
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();

  void write(const std::string& dir) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config.dump())));
    json m;
    m["command"] = command;
    m["config"] = config;
    m["config_hash"] = hash;
    m["version"] = BCAP_VERSION;
    m["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    m["outputs"] = outputs;
    m["failed_seeds"] = failed_seeds;
    write_text(dir + "/manifest.json", m.dump(2) + "\n");
  }
};

json summary_to_json(const PosteriorSummary& s) {
  json j;
  j["p"] = s.p;
  j["d"] = s.d;
  j["n"] = s.n;
  j["q"] = s.q;
  j["level"] = s.level;
  j["bonferroni"] = s.bonferroni;
  json params = json::array();
  for (const ParameterSummary& ps : s.params)
    params.push_back({{"name", ps.name},
                      {"mean", ps.mean},
                      {"median", ps.median},
                      {"lower", ps.lower},
                      {"upper", ps.upper}});
  j["params"] = std::move(params);
  j["component_order"] = s.component_order;
  j["v_between"] = std::vector<double>(
      s.v_between.data(), s.v_between.data() + s.v_between.size());
  j["divergences"] = s.divergences;
  j["accept_rates"] = s.accept_rates;
  j["step_sizes"] = s.step_sizes;
  j["alignment_reference"] = {{"chain", s.reference.chain},
                              {"draw", s.reference.draw}};
  return j;
}

// --------------------------------------------------------- flag plumbing ---

// every flag that was explicitly given overrides its config key (flags win)
struct Flags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  int jobs = 0;
  int chains = 0, warmup = 0, draws = 0;
  int d = 0;
  double cutoff = 0.0;
  bool bonferroni = false, ess_thin = false;
  std::string signals, covariates;

  CLI::Option* seed_o = nullptr;
  CLI::Option* out_o = nullptr;
  CLI::Option* jobs_o = nullptr;
  CLI::Option* chains_o = nullptr;
  CLI::Option* warmup_o = nullptr;
  CLI::Option* draws_o = nullptr;
  CLI::Option* d_o = nullptr;
  CLI::Option* cutoff_o = nullptr;
  CLI::Option* bonferroni_o = nullptr;
  CLI::Option* ess_thin_o = nullptr;
  CLI::Option* signals_o = nullptr;
  CLI::Option* covariates_o = nullptr;
  const char* d_key = "d";  // select/dfd-accuracy map --d onto d_max

  json resolve() const {
    json cfg = config_path.empty() ? json::object()
                                   : load_config_file(config_path);
    auto put = [&](CLI::Option* o, const char* key, const json& v) {
      if (o && o->count() > 0) cfg[key] = v;
    };
    put(seed_o, "seed", seed);
    put(out_o, "out", out);
    put(jobs_o, "jobs", jobs);
    put(chains_o, "chains", chains);
    put(warmup_o, "warmup", warmup);
    put(draws_o, "draws", draws);
    put(d_o, d_key, d);
    put(cutoff_o, "cutoff", cutoff);
    put(bonferroni_o, "bonferroni", bonferroni);
    put(ess_thin_o, "ess_thin", ess_thin);
    put(signals_o, "signals", signals);
    put(covariates_o, "covariates", covariates);
    return cfg;
  }
};

void add_common_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path, "JSON config file");
  f.seed_o = sub->add_option("--seed", f.seed, "RNG seed");
  f.out_o = sub->add_option("--out", f.out, "output directory");
}

void add_jobs_flag(CLI::App* sub, Flags& f) {
  f.jobs_o = sub->add_option("--jobs", f.jobs, "worker threads");
}

void add_hmc_flags(CLI::App* sub, Flags& f) {
  f.chains_o = sub->add_option("--chains", f.chains, "number of chains");
  f.warmup_o = sub->add_option("--warmup", f.warmup, "warmup iterations");
  f.draws_o = sub->add_option("--draws", f.draws, "post-warmup draws");
}

void add_input_flags(CLI::App* sub, Flags& f) {
  f.signals_o = sub->add_option("--signals", f.signals, "signals CSV");
  f.covariates_o =
      sub->add_option("--covariates", f.covariates, "covariates CSV");
}

const std::vector<Key> kCommonKeys = {
    {"seed", Kind::Uint}, {"out", Kind::Str}, {"jobs", Kind::Int}};
const std::vector<Key> kHmcKeys = {
    {"chains", Kind::Int}, {"warmup", Kind::Int}, {"draws", Kind::Int}};

std::vector<Key> keys(std::initializer_list<std::vector<Key>> groups,
                      std::initializer_list<Key> extra) {
  std::vector<Key> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  all.insert(all.end(), extra.begin(), extra.end());
  return all;
}

int default_jobs() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

HmcConfig hmc_from(const json& cfg) {
  HmcConfig hc;
  hc.chains = get_or(cfg, "chains", hc.chains);
  hc.warmup = get_or(cfg, "warmup", hc.warmup);
  hc.draws = get_or(cfg, "draws", hc.draws);
  hc.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  return hc;
}

std::vector<std::uint64_t> replication_seeds(std::uint64_t base, int count) {
  std::vector<std::uint64_t> seeds(static_cast<size_t>(count));
  for (int r = 0; r < count; ++r) seeds[static_cast<size_t>(r)] = base + std::uint64_t(r);
  return seeds;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// -------------------------------------------------------------- commands ---

int cmd_simulate(const json& cfg) {
  validate_schema(cfg, "simulate",
                  keys({kCommonKeys},
                       {{"p", Kind::Int}, {"n", Kind::Int}, {"T", Kind::Int}}));
  const int p = get_or(cfg, "p", 5);
  const int n = get_or(cfg, "n", 100);
  const int T = get_or(cfg, "T", 20);
  const auto seed = get_or<std::uint64_t>(cfg, "seed", 0);
  const auto out = get_or<std::string>(cfg, "out", ".");

  Manifest man;
  man.command = "simulate";
  man.config = {{"p", p}, {"n", n}, {"T", T}, {"seed", seed}, {"out", out}};
  fs::create_directories(out);

  auto [data, truth] =
      p == 5 ? simulate_p5(n, T, seed) : simulate_general(p, n, T, seed);
  // on disk the covariates never carry the intercept column; it is re-added
  // at load time
  write_dataset(data, out + "/signals.csv", out + "/covariates.csv", true);
  write_truth_json(truth, out + "/truth.json");
  man.outputs = {"signals.csv", "covariates.csv", "truth.json"};
  man.write(out);
  return 0;
}

int cmd_fit(const json& cfg) {
  validate_schema(
      cfg, "fit",
      keys({kCommonKeys, kHmcKeys}, {{"signals", Kind::Str},
                                     {"covariates", Kind::Str},
                                     {"d", Kind::Int},
                                     {"level", Kind::Num},
                                     {"bonferroni", Kind::Bool},
                                     {"ess_thin", Kind::Bool}}));
  const std::string signals = require_str(cfg, "signals", "fit");
  const std::string covariates = require_str(cfg, "covariates", "fit");
  const int d = get_or(cfg, "d", 2);
  const double level = get_or(cfg, "level", 0.95);
  const bool bonferroni = get_or(cfg, "bonferroni", false);
  const bool ess_thin = get_or(cfg, "ess_thin", false);
  const int jobs = get_or(cfg, "jobs", default_jobs());
  const auto out = get_or<std::string>(cfg, "out", ".");
  const HmcConfig hc = hmc_from(cfg);

  Manifest man;
  man.command = "fit";
  man.config = {{"signals", signals}, {"covariates", covariates},
                {"d", d},             {"level", level},
                {"bonferroni", bonferroni}, {"ess_thin", ess_thin},
                {"chains", hc.chains}, {"warmup", hc.warmup},
                {"draws", hc.draws},  {"seed", hc.seed},
                {"jobs", jobs},       {"out", out}};
  fs::create_directories(out);

  TimeSeriesDataset data = load(signals, covariates, true);
  int thin_target = 0;
  if (ess_thin) {
    thin_target = effective_sample_size(data);
    data = thin(data, thin_target);
  }
  const WhitenedDataset w = whiten(data);
  PosteriorDraws pd =
      fit(w, d, Hyperparameters::defaults(w.p()), hc, jobs);
  pd = align(std::move(pd));
  pd = order_components(std::move(pd));
  const PosteriorSummary s = summarize(pd, level, bonferroni);

  json sj = summary_to_json(s);
  sj["log_dfd"] = posterior_mean_dfd(pd, w);
  if (ess_thin) sj["thinned_to"] = thin_target;

  const std::vector<std::string> files = write_draws_csv(pd, out + "/draws_");
  write_text(out + "/summary.json", sj.dump(2) + "\n");
  for (const std::string& f : files)
    man.outputs.push_back(fs::path(f).filename().string());
  man.outputs.push_back("summary.json");
  man.write(out);
  return 0;
}

int cmd_select(const json& cfg) {
  validate_schema(
      cfg, "select",
      keys({kCommonKeys, kHmcKeys}, {{"signals", Kind::Str},
                                     {"covariates", Kind::Str},
                                     {"d_max", Kind::Int},
                                     {"cutoff", Kind::Num},
                                     {"ess_thin", Kind::Bool}}));
  const std::string signals = require_str(cfg, "signals", "select");
  const std::string covariates = require_str(cfg, "covariates", "select");
  if (!cfg.contains("d_max"))
    throw ValidationError("config: command 'select' requires 'd_max'");
  const int d_max = cfg.at("d_max").get<int>();
  const double cutoff = get_or(cfg, "cutoff", 1.5);
  const bool ess_thin = get_or(cfg, "ess_thin", false);
  const int jobs = get_or(cfg, "jobs", default_jobs());
  const auto out = get_or<std::string>(cfg, "out", ".");
  const HmcConfig hc = hmc_from(cfg);

  Manifest man;
  man.command = "select";
  man.config = {{"signals", signals}, {"covariates", covariates},
                {"d_max", d_max},     {"cutoff", cutoff},
                {"ess_thin", ess_thin}, {"chains", hc.chains},
                {"warmup", hc.warmup}, {"draws", hc.draws},
                {"seed", hc.seed},    {"jobs", jobs},
                {"out", out}};
  fs::create_directories(out);

  TimeSeriesDataset data = load(signals, covariates, true);
  if (ess_thin) data = thin(data, effective_sample_size(data));
  const WhitenedDataset w = whiten(data);
  const DfdReport report =
      select_d(w, d_max, cutoff, Hyperparameters::defaults(w.p()), hc, jobs);

  write_text(out + "/selection.json", report.to_json() + "\n");
  man.outputs = {"selection.json"};
  man.write(out);
  return 0;
}

int cmd_summarize(const json& cfg, const std::vector<std::string>& cli_files) {
  validate_schema(cfg, "summarize",
                  keys({kCommonKeys}, {{"draws_files", Kind::StrList},
                                       {"level", Kind::Num},
                                       {"bonferroni", Kind::Bool}}));
  std::vector<std::string> files = cli_files;
  if (files.empty())
    files = get_or(cfg, "draws_files", std::vector<std::string>{});
  if (files.empty())
    throw ValidationError(
        "config: command 'summarize' needs draw CSVs (positional arguments "
        "or 'draws_files')");
  const double level = get_or(cfg, "level", 0.95);
  const bool bonferroni = get_or(cfg, "bonferroni", false);
  const auto out = get_or<std::string>(cfg, "out", ".");

  Manifest man;
  man.command = "summarize";
  man.config = {{"draws_files", files},
                {"level", level},
                {"bonferroni", bonferroni},
                {"out", out}};
  fs::create_directories(out);

  PosteriorDraws pd = read_draws_csv(files);
  pd = align(std::move(pd));
  pd = order_components(std::move(pd));
  const PosteriorSummary s = summarize(pd, level, bonferroni);

  json sj = summary_to_json(s);
  // stored draws carry no adaptation record
  sj.erase("accept_rates");
  sj.erase("step_sizes");
  write_text(out + "/summary.json", sj.dump(2) + "\n");
  man.outputs = {"summary.json"};
  man.write(out);
  return 0;
}

int cmd_coverage(const json& cfg) {
  validate_schema(cfg, "coverage",
                  keys({kCommonKeys, kHmcKeys}, {{"p", Kind::Int},
                                                 {"n", Kind::Int},
                                                 {"T", Kind::Int},
                                                 {"d", Kind::Int},
                                                 {"level", Kind::Num},
                                                 {"replications", Kind::Int}}));
  ExperimentScenario sc;
  sc.p = get_or(cfg, "p", sc.p);
  sc.n = get_or(cfg, "n", sc.n);
  sc.T = get_or(cfg, "T", sc.T);
  sc.d = get_or(cfg, "d", sc.d);
  sc.level = get_or(cfg, "level", sc.level);
  sc.replications = get_or(cfg, "replications", sc.replications);
  const int jobs = get_or(cfg, "jobs", default_jobs());
  const auto out = get_or<std::string>(cfg, "out", ".");
  const HmcConfig hc = hmc_from(cfg);

  Manifest man;
  man.command = "coverage";
  man.config = {{"p", sc.p},         {"n", sc.n},
                {"T", sc.T},         {"d", sc.d},
                {"level", sc.level}, {"replications", sc.replications},
                {"chains", hc.chains}, {"warmup", hc.warmup},
                {"draws", hc.draws}, {"seed", hc.seed},
                {"jobs", jobs},      {"out", out}};
  fs::create_directories(out);

  const std::vector<std::uint64_t> seeds =
      replication_seeds(hc.seed, sc.replications);
  const CoverageResult res = coverage_experiment(sc, seeds, hc, jobs);

  std::string csv = "n,T,parameter,coverage\n";
  for (const auto& [parameter, rate] : res.coverage)
    csv += std::to_string(sc.n) + "," + std::to_string(sc.T) + "," +
           parameter + "," + fmt17(rate) + "\n";
  write_text(out + "/coverage.csv", csv);
  write_metric_rows_csv(res.rows, out + "/replications.csv");

  man.outputs = {"coverage.csv", "replications.csv"};
  man.failed_seeds = res.failed_seeds;
  man.write(out);
  if (!res.failed_seeds.empty()) {
    std::cerr << "bcap: coverage: " << res.failed_seeds.size()
              << " replication(s) failed\n";
    return 1;
  }
  return 0;
}

int cmd_dfd_accuracy(const json& cfg) {
  validate_schema(cfg, "dfd-accuracy",
                  keys({kCommonKeys, kHmcKeys}, {{"p", Kind::Int},
                                                 {"n", Kind::Int},
                                                 {"T", Kind::Int},
                                                 {"d_max", Kind::Int},
                                                 {"cutoff", Kind::Num},
                                                 {"replications", Kind::Int}}));
  DfdScenario sc;
  sc.p = get_or(cfg, "p", sc.p);
  sc.n = get_or(cfg, "n", sc.n);
  sc.T = get_or(cfg, "T", sc.T);
  sc.d_max = get_or(cfg, "d_max", sc.d_max);
  sc.cutoff = get_or(cfg, "cutoff", sc.cutoff);
  const int replications = get_or(cfg, "replications", 20);
  const int jobs = get_or(cfg, "jobs", default_jobs());
  const auto out = get_or<std::string>(cfg, "out", ".");
  const HmcConfig hc = hmc_from(cfg);

  Manifest man;
  man.command = "dfd-accuracy";
  man.config = {{"p", sc.p},           {"n", sc.n},
                {"T", sc.T},           {"d_max", sc.d_max},
                {"cutoff", sc.cutoff}, {"replications", replications},
                {"chains", hc.chains}, {"warmup", hc.warmup},
                {"draws", hc.draws},   {"seed", hc.seed},
                {"jobs", jobs},        {"out", out}};
  fs::create_directories(out);

  const std::vector<std::uint64_t> seeds =
      replication_seeds(hc.seed, replications);
  const DfdAccuracyResult res = dfd_accuracy_experiment(sc, seeds, hc, jobs);

  json rj;
  rj["proportion_correct"] = res.proportion_correct;
  rj["chosen"] = res.chosen;
  rj["completed"] = res.completed;
  rj["failed_seeds"] = res.failed_seeds;
  write_text(out + "/dfd_accuracy.json", rj.dump(2) + "\n");
  write_metric_rows_csv(res.rows, out + "/replications.csv");

  man.outputs = {"dfd_accuracy.json", "replications.csv"};
  man.failed_seeds = res.failed_seeds;
  man.write(out);
  if (!res.failed_seeds.empty()) {
    std::cerr << "bcap: dfd-accuracy: " << res.failed_seeds.size()
              << " replication(s) failed\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian covariate-assisted principal regression toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BCAP_VERSION);
  int rc = 0;

  Flags sim_f;
  CLI::App* sim = app.add_subcommand(
      "simulate", "generate a synthetic dataset with known structure");
  add_common_flags(sim, sim_f);
  sim->callback([&] { rc = cmd_simulate(sim_f.resolve()); });

  Flags fit_f;
  CLI::App* fitc = app.add_subcommand(
      "fit", "sample the posterior for a dataset and summarize it");
  add_common_flags(fitc, fit_f);
  add_jobs_flag(fitc, fit_f);
  add_hmc_flags(fitc, fit_f);
  add_input_flags(fitc, fit_f);
  fit_f.d_o = fitc->add_option("--d", fit_f.d, "number of components");
  fit_f.bonferroni_o = fitc->add_flag(
      "--bonferroni", fit_f.bonferroni,
      "Bonferroni-corrected credible intervals for the loadings");
  fit_f.ess_thin_o = fitc->add_flag(
      "--ess-thin", fit_f.ess_thin,
      "thin each subject to the estimated effective sample size first");
  fitc->callback([&] { rc = cmd_fit(fit_f.resolve()); });

  Flags sel_f;
  sel_f.d_key = "d_max";
  CLI::App* sel = app.add_subcommand(
      "select", "sweep candidate dimensions and pick by diagonality cutoff");
  add_common_flags(sel, sel_f);
  add_jobs_flag(sel, sel_f);
  add_hmc_flags(sel, sel_f);
  add_input_flags(sel, sel_f);
  sel_f.d_o = sel->add_option("--d", sel_f.d, "largest candidate dimension");
  sel_f.cutoff_o =
      sel->add_option("--cutoff", sel_f.cutoff, "diagonality cutoff");
  sel_f.ess_thin_o = sel->add_flag(
      "--ess-thin", sel_f.ess_thin,
      "thin each subject to the estimated effective sample size first");
  sel->callback([&] { rc = cmd_select(sel_f.resolve()); });

  Flags sum_f;
  std::vector<std::string> sum_files;
  CLI::App* sum = app.add_subcommand(
      "summarize", "re-summarize stored draw CSVs");
  add_common_flags(sum, sum_f);
  sum->add_option("files", sum_files, "draw CSVs, one per chain");
  sum_f.bonferroni_o = sum->add_flag(
      "--bonferroni", sum_f.bonferroni,
      "Bonferroni-corrected credible intervals for the loadings");
  sum->callback([&] { rc = cmd_summarize(sum_f.resolve(), sum_files); });

  Flags cov_f;
  CLI::App* cov = app.add_subcommand(
      "coverage", "repeated simulate+fit credible-interval coverage study");
  add_common_flags(cov, cov_f);
  add_jobs_flag(cov, cov_f);
  add_hmc_flags(cov, cov_f);
  cov_f.d_o = cov->add_option("--d", cov_f.d, "number of components to fit");
  cov->callback([&] { rc = cmd_coverage(cov_f.resolve()); });

  Flags dfd_f;
  dfd_f.d_key = "d_max";
  CLI::App* dfd = app.add_subcommand(
      "dfd-accuracy", "repeated simulate+select dimension-choice study");
  add_common_flags(dfd, dfd_f);
  add_jobs_flag(dfd, dfd_f);
  add_hmc_flags(dfd, dfd_f);
  dfd_f.d_o = dfd->add_option("--d", dfd_f.d, "largest candidate dimension");
  dfd_f.cutoff_o =
      dfd->add_option("--cutoff", dfd_f.cutoff, "diagonality cutoff");
  dfd->callback([&] { rc = cmd_dfd_accuracy(dfd_f.resolve()); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "bcap: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "bcap: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
