#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/aocp.hpp"
#include "ocbnn/constraints.hpp"
#include "ocbnn/network.hpp"
#include "ocbnn/priors.hpp"

namespace ocbnn {

/// log p(D | w), possibly estimated on a minibatch.
class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual double log_likelihood(const ParamVector& w, Eigen::VectorXd* grad) const = 0;
  /// Draw a new minibatch. No-op for full-batch likelihoods.
  virtual void refresh(Rng&) {}
};

/// Network likelihood over a dataset. With batch_size > 0 and smaller than N,
/// each refresh draws a batch without replacement and the batch
/// log-likelihood is scaled by N / batch_size.
class DataLikelihood : public Likelihood {
 public:
  DataLikelihood(Mlp mlp, Dataset data, std::size_t batch_size = 0, LikelihoodOptions options = {});
  double log_likelihood(const ParamVector& w, Eigen::VectorXd* grad) const override;
  void refresh(Rng& rng) override;

  std::size_t clamped_count() const { return clamped_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
  Dataset data_;
  Dataset batch_;
  std::size_t batch_size_;
  LikelihoodOptions options_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  mutable std::size_t clamped_ = 0;
};

using LogDensityFn = std::function<double(const ParamVector& w, Eigen::VectorXd* grad)>;

class FunctionLikelihood : public Likelihood {
 public:
  explicit FunctionLikelihood(LogDensityFn fn) : fn_(std::move(fn)) {}
  double log_likelihood(const ParamVector& w, Eigen::VectorXd* grad) const override { return fn_(w, grad); }

 private:
  LogDensityFn fn_;
};

class FunctionPrior : public LogPrior {
 public:
  FunctionPrior(std::size_t dim, LogDensityFn fn) : dim_(dim), fn_(std::move(fn)) {}
  std::size_t dim() const override { return dim_; }
  double log_density(const ParamVector& w, Eigen::VectorXd* grad) const override { return fn_(w, grad); }

 private:
  std::size_t dim_;
  LogDensityFn fn_;
};

/// log p(w) + log p(D | w). A null likelihood leaves the prior alone.
class LogPosterior {
 public:
  LogPosterior(std::shared_ptr<const LogPrior> prior, std::shared_ptr<Likelihood> likelihood = nullptr);

  std::size_t dim() const { return prior_->dim(); }
  double value(const ParamVector& w) const;
  double value_and_gradient(const ParamVector& w, Eigen::VectorXd& grad) const;
  void refresh(Rng& rng) const;

  const LogPrior& prior() const { return *prior_; }
  Likelihood* likelihood() const { return likelihood_.get(); }

 private:
  std::shared_ptr<const LogPrior> prior_;
  std::shared_ptr<Likelihood> likelihood_;
};

struct SamplerDiagnostics {
  double acceptance_rate = 0.0;   // HMC, collection phase: accepted / proposals
  double final_step_size = 0.0;   // HMC
  std::size_t iterations = 0;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t step_retries = 0;   // HMC step halvings after non-finite energies
  std::vector<double> elbo_history;  // BBB, one entry per epoch
};

struct PosteriorSamples {
  Eigen::MatrixXd samples;  // S x M
  std::string method;
  std::uint64_t seed = 0;
  SamplerDiagnostics diagnostics;
  std::vector<double> log_posterior;  // per sample, where available

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  ParamVector sample(std::size_t i) const { return samples.row(static_cast<Eigen::Index>(i)).transpose(); }
  void validate() const;
};

using GradientFn = std::function<double(const ParamVector& w, Eigen::VectorXd& grad)>;

/// L leapfrog steps of size `step` for H = -log p(w) + |p|^2 / 2, in place.
/// `grad` must hold the gradient of log p at the entry `w` and is updated.
/// Returns log p at the final position.
double leapfrog(const GradientFn& log_density, ParamVector& w, Eigen::VectorXd& p, Eigen::VectorXd& grad, double step,
              int steps);

struct HmcOptions {
  std::size_t burn_in = 10000;
  std::size_t n_collect = 1000;
  std::size_t thin = 10;
  int leapfrog_steps = 50;
  double step_size = 0.01;
  double target_accept = 0.9;
  bool adapt = true;
  std::size_t adapt_window = 50;
  int max_step_retries = 20;
};

PosteriorSamples hmc(const LogPosterior& post, const ParamVector& init, const HmcOptions& options, Rng& rng);

struct SvgdOptions {
  std::size_t particles = 50;
  std::size_t iterations = 1000;
  double learning_rate = 0.75;
  double init_sd = 1.0;
  double bandwidth_floor = 1e-6;
};

/// RBF bandwidth h = median squared pairwise distance / log(n + 1).
double svgd_bandwidth(const Eigen::MatrixXd& particles, double floor = 1e-6);

/// Stein direction for every particle (rows), given per-particle gradients
/// of log p.
Eigen::MatrixXd svgd_direction(const Eigen::MatrixXd& particles, const Eigen::MatrixXd& grads, double floor = 1e-6);

/// Particles start from the prior's diagonal Gaussian when it has one, else
/// N(0, init_sd^2).
PosteriorSamples svgd(const LogPosterior& post, const SvgdOptions& options, Rng& rng);
PosteriorSamples svgd(const LogPosterior& post, Eigen::MatrixXd initial, const SvgdOptions& options, Rng& rng);

struct BbbOptions {
  std::size_t epochs = 10000;
  double learning_rate = 0.1;
  std::size_t n_eps = 5;
  double init_mu = 0.0;
  /// Sd of seeded Gaussian jitter on the initial means (see AocpOptions).
  double init_mu_jitter = 0.0;
  double init_sigma = 1.0;
  std::size_t n_samples = 1000;
  /// Called after every update with the epoch index and the new parameters.
  std::function<void(std::size_t epoch, const VariationalParams& params)> on_epoch;
};

struct BbbResult {
  VariationalParams params;
  PosteriorSamples samples;
};

/// KL(N(mu, sigma^2) || prior) for a diagonal Gaussian prior.
double diagonal_kl(const VariationalParams& q, const DiagonalGaussian& p, Eigen::VectorXd* d_mu = nullptr,
                   Eigen::VectorXd* d_log_sigma = nullptr);

/// Negative ELBO estimate and its reparameterised gradient for fixed noise
/// draws `eps` (n_eps x M).
double negative_elbo(const LogPosterior& post, const VariationalParams& q, const Eigen::MatrixXd& eps,
                     Eigen::VectorXd* d_mu = nullptr, Eigen::VectorXd* d_log_sigma = nullptr);

BbbResult bbb(const LogPosterior& post, const BbbOptions& options, Rng& rng);

/// Default quantile levels of the predictive summary.
inline const std::vector<double> kDefaultQuantiles{0.025, 0.5, 0.975};

struct PredictiveSummary {
  Eigen::MatrixXd sample_outputs;  // regression: S x N per-sample means
  Eigen::VectorXd mean;            // regression: N
  std::vector<double> levels;
  Eigen::MatrixXd quantiles;       // regression: N x levels
  Eigen::MatrixXd probabilities;   // classification: N x K (binary: K = 2)
};

/// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double level);

PredictiveSummary posterior_predictive(const PosteriorSamples& samples, const Mlp& mlp, const Eigen::MatrixXd& inputs,
                                       const std::vector<double>& levels = kDefaultQuantiles);

/// Point predictions: regression predictive mean, or argmax class with ties
/// broken toward the lower index.
Eigen::VectorXd point_predictions(const PredictiveSummary& summary, Task task);

}  // namespace ocbnn
