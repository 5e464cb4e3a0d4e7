#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/constraints.hpp"
#include "ocbnn/network.hpp"
#include "ocbnn/priors.hpp"

namespace ocbnn {

/// Mean-field Gaussian over parameters, sigma stored as log sigma.
struct VariationalParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_sigma;

  static VariationalParams constant(Eigen::Index dim, double mu0, double sigma0);
  Eigen::VectorXd sigma() const { return log_sigma.array().exp(); }
  Eigen::Index size() const { return mu.size(); }
};

/// Moments of the linearised predictive: `center` is the regression mean or
/// g^T mu for the binary head; `spread` is g^T (sigma^2 g) (+ noise variance
/// for regression).
struct PredictiveMoments {
  double center = 0.0;
  double spread = 0.0;
};

PredictiveMoments regression_moments(double mean, const Eigen::VectorXd& g, const Eigen::VectorXd& sigma,
                                     double noise_sd);
/// sigmoid((1 + pi s / 8)^(-1/2) g^T mu).
double binary_probit_probability(double g_dot_mu, double s);

struct RegressionPredictive {
  double mean = 0.0;
  double var = 0.0;
};

/// Gaussian approximation of the prior predictive at x. `sigma` may contain
/// zeros here.
RegressionPredictive prior_predictive_regression(const Mlp& mlp, const Eigen::VectorXd& mu,
                                                 const Eigen::VectorXd& sigma, const Eigen::VectorXd& x);
RegressionPredictive prior_predictive_regression(const Mlp& mlp, const VariationalParams& lambda,
                                                 const Eigen::VectorXd& x);

/// Approximate p(Y = 1 | x) for the binary head.
double prior_predictive_binary(const Mlp& mlp, const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
                               const Eigen::VectorXd& x);
double prior_predictive_binary(const Mlp& mlp, const VariationalParams& lambda, const Eigen::VectorXd& x);

/// Predictive mass on outputs satisfying a deterministic constraint at x.
double objective_positive_mass(const Mlp& mlp, const VariationalParams& lambda, const Constraint& c,
                               const Eigen::VectorXd& x);

/// KL(predictive || target distribution) for a probabilistic constraint at x.
double objective_divergence(const Mlp& mlp, const VariationalParams& lambda, const Constraint& c,
                            const Eigen::VectorXd& x);

/// Normal mass of N(mean, var) on a union of intervals.
double normal_interval_mass(double mean, double var, const std::vector<NumericInterval>& intervals);
double bernoulli_kl(double p, double q);
double gaussian_kl(double m1, double v1, double m2, double v2);

struct ObjectiveGradient {
  double value = 0.0;
  Eigen::VectorXd d_mu;
  Eigen::VectorXd d_log_sigma;
};

/// The matching objective (mass for deterministic, KL for probabilistic
/// constraints) and its exact gradient w.r.t. (mu, log sigma).
ObjectiveGradient objective_gradient(const Mlp& mlp, const VariationalParams& lambda, const Constraint& c,
                                     const Eigen::VectorXd& x);

struct AocpOptions {
  int epochs = 50;
  double learning_rate = 0.1;
  std::size_t points_per_epoch = 30;
  double init_mu = 0.0;
  /// Sd of seeded Gaussian jitter added to init_mu. With zero jitter every
  /// hidden pre-activation starts at 0, where the RBF has zero slope, and the
  /// hidden weights never move.
  double init_mu_jitter = 0.0;
  double init_sigma = 1.0;
  /// Draws the per-epoch points for a constraint; sample_region when empty.
  std::function<Eigen::MatrixXd(const Constraint&, std::size_t, Rng&)> sampler;
};

struct AocpResult {
  VariationalParams params;
  /// Per-epoch loss: sum over constraints of (KL - mass), averaged over points.
  std::vector<double> loss_history;
};

/// AdaGrad on (mu, log sigma), fresh region draws every epoch; maximises mass
/// objectives and minimises divergences.
AocpResult optimize_aocp(const Mlp& mlp, const std::vector<Constraint>& constraints, const AocpOptions& options,
                         Rng& rng);

/// Mean loss of a fixed point set, matching the optimisation target.
double aocp_loss(const Mlp& mlp, const VariationalParams& lambda, const std::vector<Constraint>& constraints,
                 const std::vector<Eigen::MatrixXd>& points);

/// sum_m log N(w_m; mu_m, (sigma_m / shrink)^2).
double aocp_log_prior(const ParamVector& w, const VariationalParams& lambda, double shrink = 35.0,
                      Eigen::VectorXd* grad = nullptr);

class AocpPrior : public LogPrior {
 public:
  AocpPrior(VariationalParams lambda, double shrink = 35.0);
  std::size_t dim() const override { return static_cast<std::size_t>(lambda_.size()); }
  double log_density(const ParamVector& w, Eigen::VectorXd* grad) const override;
  std::optional<DiagonalGaussian> diagonal_gaussian() const override;
  const VariationalParams& params() const { return lambda_; }

 private:
  VariationalParams lambda_;
  double shrink_;
};

}  // namespace ocbnn
