#pragma once

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/constraints.hpp"
#include "ocbnn/network.hpp"

namespace ocbnn {

/// Diagonal Gaussian N(mean, diag(sd^2)) over parameter vectors.
struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  double log_density(const ParamVector& w, Eigen::VectorXd* grad = nullptr) const;
};

/// A log-density over parameter vectors, possibly unnormalized.
class LogPrior {
 public:
  virtual ~LogPrior() = default;
  virtual std::size_t dim() const = 0;
  /// log p(w); when `grad` is non-null the gradient is written to it.
  virtual double log_density(const ParamVector& w, Eigen::VectorXd* grad) const = 0;
  /// Set when the prior is exactly a diagonal Gaussian (closed-form KL).
  virtual std::optional<DiagonalGaussian> diagonal_gaussian() const { return std::nullopt; }
};

double log_base_prior(const ParamVector& w, double sd, Eigen::VectorXd* grad = nullptr);

/// log sum_k weights_k N(y; means_k, sd^2). Empty weights mean uniform.
double log_gmm_positive(double y, std::span<const double> means, std::span<const double> weights, double sd,
                        double* d_dy = nullptr);

/// Dirichlet concentration: gamma for allowed classes, gamma (1 - c) otherwise.
Eigen::VectorXd dirichlet_alpha(int num_classes, std::span<const int> allowed, double gamma, double c);

/// log Dirichlet(p; alpha) with p clamped to [1e-12, 1].
double log_dirichlet(const Eigen::VectorXd& p, const Eigen::VectorXd& alpha);
double log_dirichlet_positive(const Eigen::VectorXd& p, std::span<const int> allowed, double gamma, double c);

/// 1/4 (tanh(-tau0 z) + 1)(tanh(-tau1 z) + 1).
template <typename T>
T soft_indicator(const T& z, double tau0, double tau1) {
  using std::tanh;
  return T(0.25) * (tanh(T(-tau0) * z) + T(1.0)) * (tanh(T(-tau1) * z) + T(1.0));
}

/// -gamma * prod_i soft_indicator(g_i(x, y)). Unnormalized.
double log_neg_exponential(const Eigen::VectorXd& x, double y, std::span<const Expression> inequalities, double gamma,
                           double tau0, double tau1, double* d_dy = nullptr);

// --- COCP families -------------------------------------------------------------

/// Gaussian mixture around the values of a positive value-set rule.
struct GmmFamily {
  double sd = 1.0;
  std::vector<double> weights;  // empty: uniform
};

/// Dirichlet over class probabilities.
struct DirichletFamily {
  double gamma = 10.0;
  double c = 0.85;
};

/// Negative exponential over inequality groups describing the forbidden set.
struct NegExpFamily {
  double gamma = 10000.0;
  double tau0 = 15.0;
  double tau1 = 2.0;
};

/// Log-density of the constraint's own target distribution.
struct TargetFamily {};

using CocpFamily = std::variant<GmmFamily, DirichletFamily, NegExpFamily, TargetFamily>;

std::string family_name(const CocpFamily& family);

struct CocpTerm {
  Constraint constraint;
  CocpFamily family;
  ConstraintSample sample;
};

/// Sum over sample points of log p_g(raw output | x) for one constraint, and
/// d/d raw written into `d_raw` (T x output_dim).
double cocp_term_log_density(const NetworkArch& arch, const CocpTerm& term, const Eigen::MatrixXd& raw,
                             Eigen::MatrixXd* d_raw);

/// Checks family/task/polarity compatibility.
void validate_term(const NetworkArch& arch, const CocpTerm& term);

/// log_base_prior(w) + sum over constraints and frozen points of log p_g.
double log_cocp(const Mlp& mlp, const ParamVector& w, double base_sd, std::span<const CocpTerm> terms,
                Eigen::VectorXd* grad = nullptr);

Eigen::VectorXd grad_log_cocp(const Mlp& mlp, const ParamVector& w, double base_sd, std::span<const CocpTerm> terms);

class GaussianPrior : public LogPrior {
 public:
  GaussianPrior(std::size_t dim, double sd);
  std::size_t dim() const override { return dim_; }
  double log_density(const ParamVector& w, Eigen::VectorXd* grad) const override;
  std::optional<DiagonalGaussian> diagonal_gaussian() const override;

 private:
  std::size_t dim_;
  double sd_;
};

class CocpPrior : public LogPrior {
 public:
  CocpPrior(Mlp mlp, double base_sd, std::vector<CocpTerm> terms);
  std::size_t dim() const override { return mlp_.num_params(); }
  double log_density(const ParamVector& w, Eigen::VectorXd* grad) const override;

  const std::vector<CocpTerm>& terms() const { return terms_; }
  /// Redraw every constraint sample (per-iteration resampling ablation).
  void resample(Rng& rng);

 private:
  Mlp mlp_;
  double base_sd_;
  std::vector<CocpTerm> terms_;
};

}  // namespace ocbnn
