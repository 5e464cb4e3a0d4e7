#pragma once

// Sampler calibration runs shared by the unit and acceptance suites. Each
// target has closed-form moments, so the expected values are analytic.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/inference.hpp"
#include "test_support.hpp"

namespace ocbnn::test {

/// Effective sample size from the initial positive sequence of
/// autocorrelation pair sums.
inline double effective_sample_size(const Eigen::VectorXd& chain) {
  const auto n = chain.size();
  const double mean = chain.mean();
  const Eigen::VectorXd c = chain.array() - mean;
  const double c0 = c.squaredNorm() / static_cast<double>(n);
  if (c0 == 0.0) return static_cast<double>(n);
  const auto rho = [&](Eigen::Index lag) {
    return c.head(n - lag).dot(c.tail(n - lag)) / (static_cast<double>(n) * c0);
  };
  double sum = 0.0;
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    const double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  return static_cast<double>(n) / std::max(2.0 * sum - 1.0, 1.0);
}

inline std::shared_ptr<const LogPrior> isotropic_normal(Eigen::VectorXd mean) {
  const auto dim = static_cast<std::size_t>(mean.size());
  return std::make_shared<FunctionPrior>(dim, [mean](const ParamVector& w, Eigen::VectorXd* g) {
    const Eigen::VectorXd d = w - mean;
    if (g) *g = -d;
    return -0.5 * d.squaredNorm();
  });
}

struct HmcCalibration {
  double mean = 0.0;
  double var = 0.0;
  double ess = 0.0;
  double se = 0.0;  // sqrt(var / ess)
  double acceptance = 0.0;
  bool pass(double target_mean) const {
    return std::abs(mean - target_mean) <= 3.0 * se && var >= 0.8 && var <= 1.2;
  }
};

inline HmcCalibration hmc_normal(double target_mean, std::uint64_t seed) {
  LogPosterior post(isotropic_normal(Eigen::VectorXd::Constant(1, target_mean)));
  HmcOptions opt;
  opt.burn_in = 1000;
  opt.n_collect = 1000;
  opt.thin = 10;
  opt.leapfrog_steps = 50;
  opt.step_size = 0.01;
  Rng rng(seed);
  const auto s = hmc(post, Eigen::VectorXd::Zero(1), opt, rng);
  const Eigen::VectorXd chain = s.samples.col(0);
  HmcCalibration r;
  r.mean = chain.mean();
  r.var = (chain.array() - r.mean).square().sum() / static_cast<double>(chain.size() - 1);
  r.ess = effective_sample_size(chain);
  r.se = std::sqrt(r.var / r.ess);
  r.acceptance = s.diagnostics.acceptance_rate;
  return r;
}

struct SvgdCalibration {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  bool pass() const {
    return mean.cwiseAbs().maxCoeff() <= 0.15 && var.minCoeff() >= 0.7 && var.maxCoeff() <= 1.3;
  }
};

/// 50 particles, 1000 iterations on N(0, I2), started as a tight cluster
/// away from the target so the result reflects the updates rather than the
/// initialisation.
inline SvgdCalibration svgd_normal2(std::uint64_t seed) {
  LogPosterior post(isotropic_normal(Eigen::VectorXd::Zero(2)));
  SvgdOptions opt;
  opt.particles = 50;
  opt.iterations = 1000;
  Rng rng(seed);
  Eigen::MatrixXd init(50, 2);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (Eigen::Index i = 0; i < 50; ++i) init.row(i) << 2.0 + nd(rng), -1.0 + nd(rng);
  const auto s = svgd(post, init, opt, rng);
  SvgdCalibration r;
  r.mean = s.samples.colwise().mean().transpose();
  const Eigen::MatrixXd c = s.samples.rowwise() - r.mean.transpose();
  r.var = c.array().square().colwise().sum().transpose() / static_cast<double>(s.samples.rows() - 1);
  return r;
}

struct BbbCalibration {
  double mu = 0.0, sd = 0.0;                // fitted
  double post_mean = 0.0, post_sd = 0.0;    // analytic
  double log_evidence = 0.0;                // log p(y), the ELBO's maximum
  std::vector<double> elbo;        // per-epoch Monte Carlo estimate
  std::vector<double> exact_elbo;  // closed form at the parameters after each epoch
  bool pass() const {
    return std::abs(mu - post_mean) <= 0.05 * std::abs(post_mean) && std::abs(sd - post_sd) <= 0.05 * post_sd;
  }
};

/// y_i = w x_i + N(0, s^2) with prior w ~ N(0, prior_sd^2): the posterior is
/// Gaussian with precision 1 / prior_sd^2 + sum x^2 / s^2 and mean
/// (sum x y / s^2) / precision. The ELBO of q = N(m, v) is also closed form:
/// -(|y - m x|^2 + v |x|^2) / (2 s^2) - KL(q || prior) up to a constant.
inline BbbCalibration bbb_conjugate(std::uint64_t seed, std::size_t epochs = 20000) {
  const double noise = 0.5, prior_sd = 2.0, true_w = 1.3;
  Rng data_rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int n = 20;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = nd(data_rng);
    y[i] = true_w * x[i] + noise * nd(data_rng);
  }
  auto lik = std::make_shared<FunctionLikelihood>([x, y, noise](const ParamVector& w, Eigen::VectorXd* g) {
    const Eigen::VectorXd r = y - w[0] * x;
    if (g) *g = Eigen::VectorXd::Constant(1, r.dot(x) / (noise * noise));
    return -0.5 * r.squaredNorm() / (noise * noise);
  });
  LogPosterior post(std::make_shared<GaussianPrior>(1, prior_sd), lik);
  BbbOptions opt;
  opt.epochs = epochs;
  opt.learning_rate = 0.1;
  opt.n_eps = 5;
  opt.n_samples = 100;
  BbbCalibration r;
  const double log_norm = -static_cast<double>(n) * std::log(noise * std::sqrt(2.0 * std::numbers::pi));
  opt.on_epoch = [&](std::size_t, const VariationalParams& q) {
    const double m = q.mu[0], v = std::exp(2.0 * q.log_sigma[0]);
    const double expected_lik = log_norm - ((y - m * x).squaredNorm() + v * x.squaredNorm()) / (2.0 * noise * noise);
    const double kl = std::log(prior_sd) - q.log_sigma[0] + (v + m * m) / (2.0 * prior_sd * prior_sd) - 0.5;
    r.exact_elbo.push_back(expected_lik - kl);
  };
  Rng rng(seed);
  const auto fit = bbb(post, opt, rng);

  const double precision = 1.0 / (prior_sd * prior_sd) + x.squaredNorm() / (noise * noise);
  r.post_sd = 1.0 / std::sqrt(precision);
  r.post_mean = x.dot(y) / (noise * noise) / precision;
  const Eigen::MatrixXd cov =
      noise * noise * Eigen::MatrixXd::Identity(n, n) + prior_sd * prior_sd * x * x.transpose();
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::MatrixXd l = llt.matrixL();
  r.log_evidence = -0.5 * n * std::log(2.0 * std::numbers::pi) - l.diagonal().array().log().sum() -
                   0.5 * y.dot(llt.solve(y));
  r.mu = fit.params.mu[0];
  r.sd = fit.params.sigma()[0];
  r.elbo = fit.samples.diagnostics.elbo_history;
  return r;
}

}  // namespace ocbnn::test
