#include "bcap/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

#include "bcap/parallel.hpp"
#include "bcap/stats.hpp"

namespace bcap {

int PosteriorDraws::total_draws() const {
  int t = 0;
  for (const auto& c : chains) t += int(c.draws.size());
  return t;
}

int PosteriorDraws::total_divergences() const {
  int t = 0;
  for (const auto& c : chains) t += c.divergences;
  return t;
}

namespace {


Vector pack(const ExpandedState& s) {
  const int pd = int(s.u.size()), nd = int(s.lambda.size()), dq = int(s.b.size());
  Vector x(pd + nd + dq + 1);
  x.segment(0, pd) = Eigen::Map<const Vector>(s.u.data(), pd);
  x.segment(pd, nd) = Eigen::Map<const Vector>(s.lambda.data(), nd);
  x.segment(pd + nd, dq) = Eigen::Map<const Vector>(s.b.data(), dq);
  x(pd + nd + dq) = s.tau;
  return x;
}

ExpandedState unpack(const Vector& x, int p, int d, int n, int q) {
  ExpandedState s;
  s.u = Eigen::Map<const Matrix>(x.data(), p, d);
  s.lambda = Eigen::Map<const Matrix>(x.data() + p * d, n, d);
  s.b = Eigen::Map<const Matrix>(x.data() + p * d + n * d, d, q);
  s.tau = x(p * d + n * d + d * q);
  return s;
}

// complete a set of orthonormal directions into a full state: per-subject
// log variances along each direction, their least-squares regression on the
// covariates, and the residual-variance tau
ExpandedState profiled_state(const WhitenedDataset& w, const Matrix& dirs) {
  const int n = w.n(), d = int(dirs.cols());
  ExpandedState s;
  s.u = dirs;
  s.lambda.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) {
      const double v =
          dirs.col(k).dot(w.second_moment[size_t(i)] * dirs.col(k));
      s.lambda(i, k) = std::clamp(std::log(std::max(v, 1e-300)), -10.0, 10.0);
    }
  const Matrix x = w.base.covariate_matrix();  // n x q
  const Matrix bt = x.colPivHouseholderQr().solve(s.lambda);  // q x d
  s.b = bt.transpose();
  const double resid2 = (s.lambda - x * bt).squaredNorm();
  s.tau = std::log(std::max(resid2 / double(n * d), 1e-6));
  return s;
}

// visit every size-d index subset of {0..m-1}
template <typename F>
void for_each_subset(int m, int d, F&& visit) {
  std::vector<int> idx(static_cast<size_t>(d));
  for (int k = 0; k < d; ++k) idx[size_t(k)] = k;
  while (true) {
    visit(idx);
    int k = d - 1;
    while (k >= 0 && idx[size_t(k)] == m - d + k) --k;
    if (k < 0) return;
    ++idx[size_t(k)];
    for (int j = k + 1; j < d; ++j) idx[size_t(j)] = idx[size_t(j - 1)] + 1;
  }
}

// data-driven start.  The whitened average second moment is the identity by
// construction, so its own spectrum carries no signal.  Candidate directions
// come from two spectra instead: the mean squared deviation of the
// per-subject second moments from their average (variance that differs
// between subjects at all) and the squared covariate-regression fit of those
// deviations (variance that differs *with the covariates*, which separates
// weakly loaded components from idiosyncratic noise directions).  Every
// size-d subset within each pool is completed to a full state and the one
// with the highest log posterior wins; gradient steps refine directions
// within a basin but cannot swap one out, so the start must already sit in
// the right one.
ExpandedState initial_state(const WhitenedDataset& w, int d,
                            const Hyperparameters& hyper) {
  const int p = w.p(), n = w.n(), q = w.q();
  if (n == 0) {
    ExpandedState s;
    s.u = Matrix::Identity(p, p).leftCols(d);
    s.lambda = Matrix::Zero(0, d);
    s.b = Matrix::Zero(d, q);
    s.tau = 0.0;
    return s;
  }
  Matrix avg = Matrix::Zero(p, p);
  for (const auto& shat : w.second_moment) avg += shat;
  avg /= double(n);
  Matrix dev2 = Matrix::Zero(p, p);
  for (const auto& shat : w.second_moment) {
    const Matrix delta = shat - avg;
    dev2 += delta * delta;
  }
  dev2 /= double(n);

  std::vector<Matrix> pools;
  pools.push_back(sym_eigen(0.5 * (dev2 + dev2.transpose())).vectors);
  if (q >= 2) {
    const Matrix x = w.base.covariate_matrix();
    const Matrix g =
        (x.transpose() * x).ldlt().solve(x.transpose());  // q x n
    Matrix m2 = Matrix::Zero(p, p);
    for (int j = 1; j < q; ++j) {  // slope coefficients only
      Matrix cj = Matrix::Zero(p, p);
      for (int i = 0; i < n; ++i)
        cj += g(j, i) * (w.second_moment[size_t(i)] - avg);
      m2 += cj * cj;
    }
    pools.push_back(sym_eigen(0.5 * (m2 + m2.transpose())).vectors);
  }

  const int m = std::min(p, d + 4);
  ExpandedState best;
  double best_lp = -std::numeric_limits<double>::infinity();
  bool have = false;
  for (const Matrix& pool : pools) {
    for_each_subset(m, d, [&](const std::vector<int>& idx) {
      Matrix dirs(p, d);
      for (int k = 0; k < d; ++k) dirs.col(k) = pool.col(idx[size_t(k)]);
      ExpandedState s = profiled_state(w, dirs);
      const double lp = log_posterior(s, w, hyper);
      if (!have || lp > best_lp) {
        best_lp = lp;
        best = std::move(s);
        have = true;
      }
    });
  }
  return best;
}


}  // namespace

SignedPerm greedy_match(const Matrix& cols, const Matrix& reference) {
  const int d = int(cols.cols());
  if (reference.cols() != d || reference.rows() != cols.rows())
    throw ArgumentError("greedy_match: shape mismatch");
  Matrix inner = reference.transpose() * cols;  // inner(k, j) = <ref_k, col_j>
  SignedPerm sp;
  sp.perm.assign(size_t(d), -1);
  sp.sign.assign(size_t(d), 1);
  std::vector<bool> row_used(size_t(d), false), col_used(size_t(d), false);
  for (int pick = 0; pick < d; ++pick) {
    int best_k = -1, best_j = -1;
    double best = -1.0;
    for (int k = 0; k < d; ++k) {
      if (row_used[size_t(k)]) continue;
      for (int j = 0; j < d; ++j) {
        if (col_used[size_t(j)]) continue;
        const double v = std::abs(inner(k, j));
        if (v > best) {  // strict: ties keep the lowest (k, j)
          best = v;
          best_k = k;
          best_j = j;
        }
      }
    }
    row_used[size_t(best_k)] = true;
    col_used[size_t(best_j)] = true;
    sp.perm[size_t(best_k)] = best_j;
    sp.sign[size_t(best_k)] = inner(best_k, best_j) >= 0.0 ? 1 : -1;
  }
  return sp;
}

namespace {

// aligned col k = sign[k] * source col perm[k]; lambda/B permute unsigned
void apply_signed_perm(Draw& dr, const SignedPerm& sp) {
  const int d = int(dr.gamma.cols());
  Matrix u = dr.u, gamma = dr.gamma, lambda = dr.lambda, b = dr.b;
  for (int k = 0; k < d; ++k) {
    const int j = sp.perm[size_t(k)];
    const double sgn = double(sp.sign[size_t(k)]);
    u.col(k) = sgn * dr.u.col(j);
    gamma.col(k) = sgn * dr.gamma.col(j);
    lambda.col(k) = dr.lambda.col(j);
    b.row(k) = dr.b.row(j);
  }
  dr.u = std::move(u);
  dr.gamma = std::move(gamma);
  dr.lambda = std::move(lambda);
  dr.b = std::move(b);
}

}  // namespace

PosteriorDraws fit(const WhitenedDataset& data, int d,
                   const Hyperparameters& hyper, const HmcConfig& config,
                   int jobs) {
  config.validate();
  const int p = data.p(), n = data.n(), q = data.q();
  if (d < 1 || d > p)
    throw ArgumentError("fit: need 1 <= d <= p, got d=" + std::to_string(d));

  LogDensity target = [&data, &hyper, p, d, n, q](const Vector& x,
                                                  Vector* grad) {
    const ExpandedState s = unpack(x, p, d, n, q);
    if (!grad) return log_posterior(s, data, hyper);
    ExpandedState g;
    const double lp = log_posterior_grad(s, data, hyper, &g);
    *grad = pack(g);
    return lp;
  };

  const Vector init = pack(initial_state(data, d, hyper));

  PosteriorDraws out;
  out.p = p;
  out.d = d;
  out.n = n;
  out.q = q;
  out.chains.resize(size_t(config.chains));

  parallel_for(config.chains, jobs, [&](int c) {
    HmcChainResult r = run_hmc_chain(target, init, config, c);
    ChainDraws cd;
    cd.mean_accept = r.mean_accept;
    cd.step_size = r.step_size;
    cd.divergences = r.divergences;
    cd.draws.reserve(r.draws.size());
    for (size_t t = 0; t < r.draws.size(); ++t) {
      Draw dr;
      ExpandedState s = unpack(r.draws[t], p, d, n, q);
      dr.gamma = polar_factor(s.u).gamma.mat();
      dr.u = std::move(s.u);
      dr.lambda = std::move(s.lambda);
      dr.b = std::move(s.b);
      dr.tau = s.tau;
      dr.lp = r.lp[t];
      dr.divergent = r.divergent[t] != 0;
      cd.draws.push_back(std::move(dr));
    }
    out.chains[size_t(c)] = std::move(cd);
  });

  return align(std::move(out));
}

PosteriorDraws align(PosteriorDraws draws, std::optional<Matrix> reference) {
  if (draws.total_draws() == 0) {
    draws.aligned = true;
    return draws;
  }

  AlignmentReference ref;
  if (reference) {
    if (reference->rows() != draws.p || reference->cols() != draws.d)
      throw ArgumentError("align: reference must be p x d");
    ref.gamma = *reference;
  } else {  // the draw with the highest log posterior, first on ties
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < int(draws.chains.size()); ++c) {
      const auto& ch = draws.chains[size_t(c)];
      for (int t = 0; t < int(ch.draws.size()); ++t) {
        if (ch.draws[size_t(t)].lp > best) {
          best = ch.draws[size_t(t)].lp;
          ref.chain = c;
          ref.draw = t;
        }
      }
    }
    ref.gamma = draws.chains[size_t(ref.chain)].draws[size_t(ref.draw)].gamma;
  }

  for (auto& ch : draws.chains)
    for (auto& dr : ch.draws) apply_signed_perm(dr, greedy_match(dr.gamma, ref.gamma));

  draws.aligned = true;
  draws.reference = std::move(ref);
  return draws;
}

PosteriorDraws order_components(PosteriorDraws draws) {
  if (!draws.aligned)
    throw ArgumentError("order_components: align the draws first");
  const int d = draws.d, n = draws.n;
  const int total = draws.total_draws();
  if (total == 0) {
    draws.ordered = true;
    draws.component_order.resize(size_t(d));
    std::iota(draws.component_order.begin(), draws.component_order.end(), 0);
    draws.v_between = Vector::Zero(d);
    return draws;
  }

  // V^(k) = sum_i (E[lambda_ik] - mean_i E[lambda_ik])^2
  Matrix lambda_mean = Matrix::Zero(n, d);
  draws.for_each([&](const Draw& dr) { lambda_mean += dr.lambda; });
  lambda_mean /= double(total);
  Vector v(d);
  for (int k = 0; k < d; ++k) {
    const double m = n > 0 ? lambda_mean.col(k).mean() : 0.0;
    v(k) = n > 0 ? (lambda_mean.col(k).array() - m).square().sum() : 0.0;
  }

  std::vector<int> order(static_cast<size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return v(a) > v(b); });

  SignedPerm sp;
  sp.perm = order;
  sp.sign.assign(size_t(d), 1);
  draws.component_order = order;
  draws.v_between.resize(d);
  for (int k = 0; k < d; ++k) draws.v_between(k) = v(order[size_t(k)]);

  for (auto& ch : draws.chains)
    for (auto& dr : ch.draws) apply_signed_perm(dr, sp);
  // keep the reference in the same indexing as the draws
  if (draws.reference.gamma.size() > 0) {
    Matrix g = draws.reference.gamma;
    for (int k = 0; k < d; ++k) g.col(k) = draws.reference.gamma.col(order[size_t(k)]);
    draws.reference.gamma = std::move(g);
  }
  draws.ordered = true;
  return draws;
}

namespace {

ParameterSummary summarize_scalar(const std::string& name,
                                  std::vector<double> values, double lo_q,
                                  double hi_q) {
  std::sort(values.begin(), values.end());
  ParameterSummary ps;
  ps.name = name;
  ps.mean = mean(values);
  ps.median = quantile_sorted(values, 0.5);
  ps.lower = quantile_sorted(values, lo_q);
  ps.upper = quantile_sorted(values, hi_q);
  return ps;
}

}  // namespace

PosteriorSummary summarize(const PosteriorDraws& draws, double level,
                           bool bonferroni) {
  if (draws.total_draws() == 0)
    throw ValidationError("summarize: no draws");
  if (!(level > 0.0 && level < 1.0))
    throw ArgumentError("summarize: level must lie in (0, 1)");

  const int p = draws.p, d = draws.d, n = draws.n, q = draws.q;
  const int total = draws.total_draws();

  PosteriorSummary out;
  out.p = p;
  out.d = d;
  out.n = n;
  out.q = q;
  out.level = level;
  out.bonferroni = bonferroni;

  const double lo = (1.0 - level) / 2.0;
  const double hi = 1.0 - lo;
  // simultaneous loading intervals: fixed family level 0.05 split over p
  const double g_lo = bonferroni ? 0.025 / double(p) : lo;
  const double g_hi = bonferroni ? 1.0 - 0.025 / double(p) : hi;

  std::vector<double> buf(static_cast<size_t>(total));
  auto collect = [&](auto&& get) {
    int t = 0;
    draws.for_each([&](const Draw& dr) { buf[size_t(t++)] = get(dr); });
    return buf;
  };

  out.gamma_mean = Matrix::Zero(p, d);
  out.gamma_median = Matrix::Zero(p, d);
  for (int k = 0; k < d; ++k)
    for (int j = 0; j < p; ++j) {
      const std::string name =
          "gamma_" + std::to_string(j + 1) + "_" + std::to_string(k + 1);
      ParameterSummary ps = summarize_scalar(
          name, collect([&](const Draw& dr) { return dr.gamma(j, k); }), g_lo,
          g_hi);
      out.gamma_mean(j, k) = ps.mean;
      out.gamma_median(j, k) = ps.median;
      out.params.push_back(std::move(ps));
    }

  out.b_mean = Matrix::Zero(d, q);
  out.b_median = Matrix::Zero(d, q);
  for (int k = 0; k < d; ++k)
    for (int j = 0; j < q; ++j) {
      const std::string name =
          "B_" + std::to_string(k + 1) + "_" + std::to_string(j + 1);
      ParameterSummary ps = summarize_scalar(
          name, collect([&](const Draw& dr) { return dr.b(k, j); }), lo, hi);
      out.b_mean(k, j) = ps.mean;
      out.b_median(k, j) = ps.median;
      out.params.push_back(std::move(ps));
    }

  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) {
      const std::string name =
          "lambda_" + std::to_string(i + 1) + "_" + std::to_string(k + 1);
      out.params.push_back(summarize_scalar(
          name, collect([&](const Draw& dr) { return dr.lambda(i, k); }), lo,
          hi));
    }

  {
    ParameterSummary ps = summarize_scalar(
        "sigma", collect([](const Draw& dr) { return dr.sigma(); }), lo, hi);
    out.sigma_mean = ps.mean;
    out.sigma_median = ps.median;
    out.params.push_back(std::move(ps));
  }

  out.component_order = draws.component_order;
  out.v_between = draws.v_between;
  out.divergences = draws.total_divergences();
  for (const auto& ch : draws.chains) {
    out.accept_rates.push_back(ch.mean_accept);
    out.step_sizes.push_back(ch.step_size);
  }
  out.reference = draws.reference;
  return out;
}

const ParameterSummary& PosteriorSummary::find(const std::string& name) const {
  for (const auto& ps : params)
    if (ps.name == name) return ps;
  throw ArgumentError("summary: no parameter named " + name);
}

std::vector<std::string> write_draws_csv(const PosteriorDraws& draws,
                                         const std::string& prefix) {
  const int p = draws.p, d = draws.d, n = draws.n, q = draws.q;
  std::vector<std::string> files;
  char num[64];
  for (int c = 0; c < int(draws.chains.size()); ++c) {
    const std::string path = prefix + "chain_" + std::to_string(c + 1) + ".csv";
    std::ofstream out(path);
    if (!out) throw Error("write_draws_csv: cannot open " + path);

    std::string header;
    for (int col = 0; col < d; ++col)
      for (int r = 0; r < p; ++r)
        header += "U_" + std::to_string(r + 1) + "_" + std::to_string(col + 1) + ",";
    for (int col = 0; col < d; ++col)
      for (int i = 0; i < n; ++i)
        header += "lambda_" + std::to_string(i + 1) + "_" + std::to_string(col + 1) + ",";
    for (int j = 0; j < q; ++j)
      for (int k = 0; k < d; ++k)
        header += "B_" + std::to_string(k + 1) + "_" + std::to_string(j + 1) + ",";
    header += "tau,lp,divergent";
    out << header << "\n";

    for (const auto& dr : draws.chains[size_t(c)].draws) {
      std::string line;
      auto put = [&](double v) {
        std::snprintf(num, sizeof num, "%.17g", v);
        line += num;
        line += ',';
      };
      for (int col = 0; col < d; ++col)
        for (int r = 0; r < p; ++r) put(dr.u(r, col));
      for (int col = 0; col < d; ++col)
        for (int i = 0; i < n; ++i) put(dr.lambda(i, col));
      for (int j = 0; j < q; ++j)
        for (int k = 0; k < d; ++k) put(dr.b(k, j));
      put(dr.tau);
      put(dr.lp);
      line += dr.divergent ? '1' : '0';
      out << line << "\n";
    }
    if (!out) throw Error("write_draws_csv: write failed for " + path);
    files.push_back(path);
  }
  return files;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

PosteriorDraws read_draws_csv(const std::vector<std::string>& chain_files) {
  if (chain_files.empty())
    throw ArgumentError("read_draws_csv: no files given");

  PosteriorDraws out;
  bool dims_set = false;

  for (const std::string& path : chain_files) {
    std::ifstream in(path);
    if (!in) throw ParseError("read_draws_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
      throw ParseError(path + ": empty file");
    const std::vector<std::string> header = split_csv_line(line);

    int p = 0, d = 0, n = 0, q = 0;
    for (const auto& name : header) {
      int a = 0, b = 0;
      if (std::sscanf(name.c_str(), "U_%d_%d", &a, &b) == 2) {
        p = std::max(p, a);
        d = std::max(d, b);
      } else if (std::sscanf(name.c_str(), "lambda_%d_%d", &a, &b) == 2) {
        n = std::max(n, a);
      } else if (std::sscanf(name.c_str(), "B_%d_%d", &a, &b) == 2) {
        q = std::max(q, b);
      } else if (name != "tau" && name != "lp" && name != "divergent") {
        throw ParseError(path + ": unexpected column '" + name + "'");
      }
    }
    if (p == 0 || d == 0 || q == 0)
      throw ParseError(path + ": header lacks U/B columns");
    const size_t expected = size_t(p * d + n * d + d * q) + 3;
    if (header.size() != expected)
      throw ParseError(path + ": header has " + std::to_string(header.size()) +
                       " columns, expected " + std::to_string(expected));

    if (!dims_set) {
      out.p = p;
      out.d = d;
      out.n = n;
      out.q = q;
      dims_set = true;
    } else if (p != out.p || d != out.d || n != out.n || q != out.q) {
      throw ParseError(path + ": chain dimensions disagree with earlier files");
    }

    ChainDraws cd;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const std::vector<std::string> cells = split_csv_line(line);
      if (cells.size() != expected)
        throw ParseError(path + ":" + std::to_string(lineno) + ": has " +
                         std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(expected));
      size_t idx = 0;
      auto next = [&]() {
        const std::string& cell = cells[idx++];
        try {
          size_t pos = 0;
          const double v = std::stod(cell, &pos);
          if (pos != cell.size()) throw std::invalid_argument(cell);
          return v;
        } catch (const std::exception&) {
          throw ParseError(path + ":" + std::to_string(lineno) +
                           ": non-numeric cell '" + cell + "'");
        }
      };
      Draw dr;
      dr.u.resize(p, d);
      dr.lambda.resize(n, d);
      dr.b.resize(d, q);
      for (int col = 0; col < d; ++col)
        for (int r = 0; r < p; ++r) dr.u(r, col) = next();
      for (int col = 0; col < d; ++col)
        for (int i = 0; i < n; ++i) dr.lambda(i, col) = next();
      for (int j = 0; j < q; ++j)
        for (int k = 0; k < d; ++k) dr.b(k, j) = next();
      dr.tau = next();
      dr.lp = next();
      dr.divergent = next() != 0.0;
      dr.gamma = polar_factor(dr.u).gamma.mat();
      cd.draws.push_back(std::move(dr));
      cd.divergences += cd.draws.back().divergent ? 1 : 0;
    }
    out.chains.push_back(std::move(cd));
  }
  return out;
}

}  // namespace bcap
