#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <bcap/ingest.hpp>
#include <bcap/simulate.hpp>

#include "test_util.hpp"

using namespace bcap;
using testutil::max_abs;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string write_file(const std::string& name, const std::string& content) {
  const std::string path = tmp_path(name);
  std::ofstream out(path);
  out << content;
  return path;
}

const char* kToySignals =
    "subject,t,y1,y2\n"
    "a,1,0.5,1.5\n"
    "a,2,-0.5,2.5\n"
    "a,3,1.25,-3.5\n"
    "b,1,4.0,0.25\n"
    "b,2,-4.0,0.75\n";

const char* kToyCovariates =
    "subject,x1\n"
    "a,0.0\n"
    "b,1.0\n";

}  // namespace

TEST_CASE("load: toy two-subject dataset") {
  const std::string sig = write_file("bcap_sig.csv", kToySignals);
  const std::string cov = write_file("bcap_cov.csv", kToyCovariates);

  TimeSeriesDataset ds = load(sig, cov, true);
  REQUIRE(ds.n() == 2);
  CHECK(ds.p == 2);
  CHECK(ds.q == 2);  // intercept + x1
  CHECK(ds.ids[0] == "a");
  CHECK(ds.ids[1] == "b");
  CHECK(ds.T(0) == 3);
  CHECK(ds.T(1) == 2);
  CHECK(ds.signals[0](2, 0) == 1.25);
  CHECK(ds.signals[1](1, 1) == 0.75);
  CHECK(ds.covariates[0](0) == 1.0);
  CHECK(ds.covariates[0](1) == 0.0);
  CHECK(ds.covariates[1](1) == 1.0);

  SUBCASE("without intercept") {
    TimeSeriesDataset raw = load(sig, cov, false);
    CHECK(raw.q == 1);
    CHECK(raw.covariates[1](0) == 1.0);
  }
}

TEST_CASE("load: HCP-shaped wide input gets q=3 with intercept") {
  std::string sig = "subject,t";
  for (int j = 1; j <= 15; ++j) sig += ",y" + std::to_string(j);
  sig += "\n";
  for (int i = 0; i < 3; ++i)
    for (int t = 1; t <= 4; ++t) {
      sig += "hcp" + std::to_string(i) + "," + std::to_string(t);
      for (int j = 0; j < 15; ++j)
        sig += "," + std::to_string(0.1 * (i + 1) * (t + j));
      sig += "\n";
    }
  std::string cov = "subject,x1,x2\nhcp0,0,1\nhcp1,1,1\nhcp2,1,0\n";
  TimeSeriesDataset ds = load(write_file("bcap_hcp_sig.csv", sig),
                              write_file("bcap_hcp_cov.csv", cov), true);
  CHECK(ds.n() == 3);
  CHECK(ds.p == 15);
  CHECK(ds.q == 3);
  CHECK(ds.covariates[2](1) == 1.0);
  CHECK(ds.covariates[2](2) == 0.0);
}

TEST_CASE("load: parse failures carry file and line") {
  const std::string sig = write_file("bcap_sig.csv", kToySignals);
  const std::string cov = write_file("bcap_cov.csv", kToyCovariates);

  SUBCASE("missing covariate subject named") {
    const std::string cov2 = write_file("bcap_cov2.csv", "subject,x1\na,0\n");
    CHECK_THROWS_WITH_AS(load(sig, cov2, true),
                         doctest::Contains("missing subject 'b'"), ParseError);
  }
  SUBCASE("ragged signal row") {
    const std::string bad = write_file(
        "bcap_bad1.csv", "subject,t,y1,y2\na,1,0.5,1.5\na,2,-0.5\n");
    CHECK_THROWS_WITH_AS(load(bad, cov, true), doctest::Contains("bcap_bad1.csv:3"),
                         ParseError);
  }
  SUBCASE("non-numeric cell") {
    const std::string bad = write_file(
        "bcap_bad2.csv", "subject,t,y1,y2\na,1,0.5,ouch\na,2,1,1\n");
    CHECK_THROWS_WITH_AS(load(bad, cov, true), doctest::Contains("ouch"),
                         ParseError);
  }
  SUBCASE("non-contiguous t") {
    const std::string bad = write_file(
        "bcap_bad3.csv", "subject,t,y1,y2\na,1,0.5,1.5\na,3,1,1\n");
    CHECK_THROWS_WITH_AS(load(bad, cov, true),
                         doctest::Contains("expected t=2, got 3"), ParseError);
  }
  SUBCASE("wrong header") {
    const std::string bad = write_file(
        "bcap_bad4.csv", "id,t,y1,y2\na,1,0.5,1.5\n");
    CHECK_THROWS_AS(load(bad, cov, true), ParseError);
  }
  SUBCASE("duplicate covariate row") {
    const std::string bad = write_file(
        "bcap_bad5.csv", "subject,x1\na,0\na,1\nb,1\n");
    CHECK_THROWS_WITH_AS(load(sig, bad, true),
                         doctest::Contains("duplicate subject 'a'"), ParseError);
  }
  SUBCASE("nonexistent file") {
    CHECK_THROWS_AS(load("/nonexistent/sig.csv", cov, true), ParseError);
  }
  SUBCASE("single-row subject fails dataset validation") {
    const std::string bad = write_file(
        "bcap_bad6.csv", "subject,t,y1,y2\na,1,0.5,1.5\nb,1,1,1\nb,2,2,2\n");
    const std::string covb =
        write_file("bcap_covb.csv", "subject,x1\na,0\nb,1\n");
    CHECK_THROWS_AS(load(bad, covb, true), ValidationError);
  }
}

TEST_CASE("write_dataset / load round-trips bit-exactly") {
  auto [ds, truth] = simulate_p5(4, 9, 61);  // q=3 with leading intercept
  const std::string sig = tmp_path("bcap_rt_sig.csv");
  const std::string cov = tmp_path("bcap_rt_cov.csv");

  SUBCASE("dataset with intercept column, dropped on write") {
    write_dataset(ds, sig, cov, true);
    TimeSeriesDataset re = load(sig, cov, true);
    REQUIRE(re.n() == ds.n());
    CHECK(re.q == ds.q);
    for (int i = 0; i < ds.n(); ++i) {
      CHECK(re.ids[size_t(i)] == ds.ids[size_t(i)]);
      CHECK(re.signals[size_t(i)] == ds.signals[size_t(i)]);
      CHECK(re.covariates[size_t(i)] == ds.covariates[size_t(i)]);
    }
  }
  SUBCASE("raw covariates kept as-is") {
    TimeSeriesDataset raw = ds;
    raw.q = 2;
    for (auto& x : raw.covariates) x = x.tail(2).eval();
    write_dataset(raw, sig, cov, false);
    TimeSeriesDataset re = load(sig, cov, false);
    CHECK(re.q == 2);
    for (int i = 0; i < raw.n(); ++i) {
      CHECK(re.signals[size_t(i)] == raw.signals[size_t(i)]);
      CHECK(re.covariates[size_t(i)] == raw.covariates[size_t(i)]);
    }
  }
  std::remove(sig.c_str());
  std::remove(cov.c_str());
}

namespace {

TimeSeriesDataset single_series(Vector x) {
  TimeSeriesDataset ds;
  ds.p = 1;
  ds.q = 1;
  ds.ids.push_back("s");
  Matrix y(x.size(), 1);
  y.col(0) = x;
  ds.signals.push_back(std::move(y));
  ds.covariates.push_back(Vector::Ones(1));
  return ds;
}

}  // namespace

TEST_CASE("effective_sample_size: white noise keeps >= 0.8 T") {
  // the truncated integrated-autocorrelation estimate carries O(1/sqrt(T))
  // noise per lag, so the 0.8 floor needs T large enough that a run of
  // positive noise lags cannot push tau above 1.25
  const int T = 16384;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + std::uint64_t(trial));
    TimeSeriesDataset ds = single_series(gaussian_matrix(T, 1, rng).col(0));
    CHECK(effective_sample_size(ds) >= int(0.8 * T));
  }
}

TEST_CASE("effective_sample_size: AR(1) rho=0.5 gives ESS/T near 1/3") {
  const int T = 20000;
  Rng rng(71);
  Vector x(T);
  x(0) = draw_normal(rng);
  for (int t = 1; t < T; ++t) x(t) = 0.5 * x(t - 1) + draw_normal(rng);
  const int ess = effective_sample_size(single_series(x));
  CHECK(std::abs(double(ess) / double(T) - 1.0 / 3.0) <= 0.1 / 3.0);
}

TEST_CASE("effective_sample_size: reductions and failure modes") {
  Rng rng(73);
  TimeSeriesDataset ds;
  ds.p = 2;
  ds.q = 1;
  for (int i = 0; i < 2; ++i) {
    ds.ids.push_back("subj" + std::to_string(i + 1));
    ds.signals.push_back(gaussian_matrix(64, 2, rng));
    ds.covariates.push_back(Vector::Ones(1));
  }

  SUBCASE("min over subjects and coordinates") {
    // make subject 2, coordinate 2 strongly autocorrelated
    Vector slow(64);
    slow(0) = draw_normal(rng);
    for (int t = 1; t < 64; ++t) slow(t) = 0.9 * slow(t - 1) + 0.1 * draw_normal(rng);
    ds.signals[1].col(1) = slow;
    const int whole = effective_sample_size(ds);
    TimeSeriesDataset only;
    only.p = 2;
    only.q = 1;
    only.ids.push_back("subj2");
    only.signals.push_back(ds.signals[1]);
    only.covariates.push_back(Vector::Ones(1));
    CHECK(whole == effective_sample_size(only));
    CHECK(whole < 40);
  }
  SUBCASE("constant coordinate is named") {
    ds.signals[1].col(1).setConstant(3.25);
    CHECK_THROWS_WITH_AS(effective_sample_size(ds),
                         doctest::Contains("'subj2' coordinate 2"),
                         DegenerateError);
  }
  SUBCASE("too-short series rejected") {
    TimeSeriesDataset tiny;
    tiny.p = 1;
    tiny.q = 1;
    tiny.ids.push_back("s");
    tiny.signals.push_back(gaussian_matrix(3, 1, rng));
    tiny.covariates.push_back(Vector::Ones(1));
    CHECK_THROWS_AS(effective_sample_size(tiny), ArgumentError);
  }
  SUBCASE("affine transforms leave ESS unchanged") {
    const int base = effective_sample_size(ds);
    TimeSeriesDataset scaled = ds;
    for (auto& y : scaled.signals) {
      y.col(0) = (4.0 * y.col(0)).eval();  // exact power-of-two scale
      y.col(1) = (-3.7 * y.col(1)).array() + 11.0;
    }
    CHECK(effective_sample_size(scaled) == base);
  }
}

TEST_CASE("thin: stride arithmetic, mean removal, validation") {
  TimeSeriesDataset ds;
  ds.p = 2;
  ds.q = 1;
  ds.ids.push_back("s");
  Matrix y(1200, 2);
  for (int l = 0; l < 1200; ++l) {
    y(l, 0) = double(l);
    y(l, 1) = std::sin(0.01 * double(l));
  }
  ds.signals.push_back(y);
  ds.covariates.push_back(Vector::Ones(1));

  SUBCASE("T=1200, target 35: stride 34, rows 1, 35, 69, ...") {
    TimeSeriesDataset t = thin(ds, 35);
    REQUIRE(t.T(0) == 35);
    // kept first-coordinate values are 34*l; their mean is exactly 578
    for (int l = 0; l < 35; ++l) CHECK(t.signals[0](l, 0) == 34.0 * l - 578.0);
    CHECK(std::abs(t.signals[0].col(1).sum()) <= 1e-10);
    CHECK(t.covariates[0] == ds.covariates[0]);
    CHECK(t.ids == ds.ids);
  }
  SUBCASE("target equal to T: mean removal only") {
    TimeSeriesDataset t = thin(ds, 1200);
    Matrix centered = y;
    centered.rowwise() -= y.colwise().mean();
    CHECK(max_abs(t.signals[0] - centered) == 0.0);
    CHECK(std::abs(t.signals[0].col(0).sum()) <= 1e-7);  // magnitudes ~1e3
  }
  SUBCASE("oversized target rejected, subject named") {
    CHECK_THROWS_WITH_AS(thin(ds, 1201), doctest::Contains("'s'"),
                         ArgumentError);
    CHECK_THROWS_AS(thin(ds, 0), ArgumentError);
  }
}
