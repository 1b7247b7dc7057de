#include "bcap/hmc.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bcap/errors.hpp"

namespace bcap {

using Eigen::VectorXd;

void HmcConfig::validate() const {
  if (chains < 1) throw ValidationError("hmc: need at least 1 chain");
  if (warmup < 1) throw ValidationError("hmc: need at least 1 warmup iteration");
  if (draws < 1) throw ValidationError("hmc: need at least 1 recorded draw");
  if (leapfrog_steps < 1) throw ValidationError("hmc: need at least 1 leapfrog step");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw ValidationError("hmc: target acceptance must lie in (0, 1)");
}

namespace {

// evaluate the target, mapping NumericError (and non-finite results) to a
// "left the support" signal instead of unwinding the chain
bool safe_eval(const LogDensity& target, const VectorXd& x, VectorXd* grad,
               double* lp) {
  try {
    *lp = target(x, grad);
  } catch (const NumericError&) {
    return false;
  }
  if (!std::isfinite(*lp)) return false;
  if (grad && !grad->allFinite()) return false;
  return true;
}

}  // namespace

LeapfrogResult leapfrog(const LogDensity& target, VectorXd x, VectorXd rho,
                        double step, int n_steps) {
  LeapfrogResult out;
  VectorXd grad(x.size());
  double lp = 0.0;
  if (!safe_eval(target, x, &grad, &lp)) return out;
  for (int s = 0; s < n_steps; ++s) {
    rho += 0.5 * step * grad;
    x += step * rho;
    if (!safe_eval(target, x, &grad, &lp)) return out;
    rho += 0.5 * step * grad;
  }
  out.x = std::move(x);
  out.rho = std::move(rho);
  out.lp = lp;
  out.ok = true;
  return out;
}

double find_initial_step_size(const LogDensity& target, const VectorXd& init,
                              Rng& rng, int n_steps) {
  double lp0 = 0.0;
  VectorXd grad(init.size());
  if (!safe_eval(target, init, &grad, &lp0))
    throw InitializationError("hmc: log density is not finite at the initial point");

  VectorXd rho(init.size());
  for (Eigen::Index j = 0; j < rho.size(); ++j) rho(j) = draw_normal(rng);
  const double h0 = lp0 - 0.5 * rho.squaredNorm();

  double step = 1.0;
  auto log_ratio = [&](double eps) {
    LeapfrogResult traj = leapfrog(target, init, rho, eps, n_steps);
    if (!traj.ok) return -std::numeric_limits<double>::infinity();
    return (traj.lp - 0.5 * traj.rho.squaredNorm()) - h0;
  };
  double r = log_ratio(step);
  const double crit = std::log(0.5);
  const bool grow = r > crit;  // acceptance above 1/2: double until it drops
  for (int it = 0; it < 100; ++it) {
    step *= grow ? 2.0 : 0.5;
    r = log_ratio(step);
    if (grow ? (r <= crit) : (r > crit)) return grow ? step * 0.5 : step;
  }
  return step;
}

HmcChainResult run_hmc_chain(const LogDensity& target, const VectorXd& init,
                             const HmcConfig& config, int chain_index) {
  config.validate();
  if (!init.allFinite())
    throw InitializationError("hmc: initial state has non-finite entries");

  Rng rng = substream(config.seed, stream::kChain,
                      static_cast<std::uint64_t>(chain_index));

  VectorXd x = init;
  VectorXd grad(x.size());
  double lp = 0.0;
  if (!safe_eval(target, x, &grad, &lp))
    throw InitializationError("hmc: log density is not finite at the initial point");

  // dual averaging toward the target acceptance rate
  double step = find_initial_step_size(target, x, rng, config.leapfrog_steps);
  const double mu = std::log(10.0 * step);
  const double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  double h_bar = 0.0, log_step_bar = std::log(step);

  HmcChainResult out;
  out.draws.reserve(size_t(config.draws));
  out.lp.reserve(size_t(config.draws));
  out.divergent.reserve(size_t(config.draws));
  double accept_sum = 0.0;

  const int total = config.warmup + config.draws;
  for (int iter = 0; iter < total; ++iter) {
    const bool warming = iter < config.warmup;

    VectorXd rho(x.size());
    for (Eigen::Index j = 0; j < rho.size(); ++j) rho(j) = draw_normal(rng);
    const double h0 = lp - 0.5 * rho.squaredNorm();

    LeapfrogResult prop =
        leapfrog(target, x, rho, step, config.leapfrog_steps);
    double accept_prob = 0.0;
    bool divergent = true;
    if (prop.ok) {
      const double h1 = prop.lp - 0.5 * prop.rho.squaredNorm();
      const double dh = h1 - h0;
      divergent = !(std::abs(dh) <= kDivergenceThreshold);
      if (!divergent) {
        accept_prob = std::min(1.0, std::exp(dh));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        if (unif(rng) < accept_prob) {
          x = std::move(prop.x);
          lp = prop.lp;
        }
      }
    }

    if (warming) {
      const double m = double(iter + 1);
      h_bar = (1.0 - 1.0 / (m + t0)) * h_bar +
              (config.target_accept - accept_prob) / (m + t0);
      const double log_step = mu - std::sqrt(m) / gamma * h_bar;
      const double w = std::pow(m, -kappa);
      log_step_bar = w * log_step + (1.0 - w) * log_step_bar;
      step = std::exp(log_step);
      if (iter + 1 == config.warmup) step = std::exp(log_step_bar);
    } else {
      out.draws.push_back(x);
      out.lp.push_back(lp);
      out.divergent.push_back(divergent ? 1 : 0);
      out.divergences += divergent ? 1 : 0;
      accept_sum += accept_prob;
    }
  }

  out.mean_accept = accept_sum / double(config.draws);
  out.step_size = step;

  if (out.divergences > config.draws / 10)
    throw DiagnosticError("hmc: chain " + std::to_string(chain_index) + " had " +
                          std::to_string(out.divergences) + " divergent transitions in " +
                          std::to_string(config.draws) + " post-warmup draws (> 10%)");
  return out;
}

}  // namespace bcap
