#include "ocbnn/aocp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ocbnn/optim.hpp"

namespace ocbnn {

namespace {

constexpr double kProbFloor = 1e-12;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

std::span<const double> as_span(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

std::span<double> mut_span(Eigen::VectorXd& x) { return {x.data(), static_cast<std::size_t>(x.size())}; }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::isfinite(z) ? kInvSqrt2Pi * std::exp(-0.5 * z * z) : 0.0; }
double z_pdf(double z) { return std::isfinite(z) ? z * normal_pdf(z) : 0.0; }

void require_single_output(const NetworkArch& arch, const char* what) {
  if (arch.task == Task::k_class)
    throw ConfigError(std::string(what) + ": only regression and binary heads have a closed-form predictive");
}

// Objective value o and its partials a = do/dcenter, b = do/dspread.
struct Partials {
  double o = 0.0;
  double a = 0.0;
  double b = 0.0;
};

double kappa(double s) { return 1.0 / std::sqrt(1.0 + std::numbers::pi * s / 8.0); }

// p1 and its partials w.r.t. (g^T mu, s).
Partials probit_partials(double u, double s) {
  const double k = kappa(s);
  const double p = sigmoid(k * u);
  const double dk_ds = -0.5 * k * k * k * std::numbers::pi / 8.0;
  return {p, p * (1.0 - p) * k, p * (1.0 - p) * u * dk_ds};
}

Partials partials(const NetworkArch& arch, const Constraint& c, const Eigen::VectorXd& x, double center,
                  double spread) {
  const bool regression = arch.task == Task::regression;
  if (c.deterministic()) {
    if (regression) {
      const double sd = std::sqrt(spread);
      Partials r;
      for (const auto& iv : permitted_intervals(c, x)) {
        const double za = (iv.lower - center) / sd;
        const double zb = (iv.upper - center) / sd;
        r.o += normal_cdf(zb) - normal_cdf(za);
        r.a += (normal_pdf(za) - normal_pdf(zb)) / sd;
        r.b += (z_pdf(za) - z_pdf(zb)) / (2.0 * spread);
      }
      return r;
    }
    const Partials p1 = probit_partials(center, spread);
    Partials r;
    for (int k : permitted_classes(c, x, 2)) {
      const double sign = k == 1 ? 1.0 : -1.0;
      r.o += k == 1 ? p1.o : 1.0 - p1.o;
      r.a += sign * p1.a;
      r.b += sign * p1.b;
    }
    return r;
  }
  if (regression) {
    const auto* g = std::get_if<GaussianTarget>(&*c.target);
    if (!g) throw ConfigError("constraint '" + c.id + "': regression divergence needs a gaussian target");
    const double mt = g->mean(as_span(x));
    const double st = g->sd(as_span(x));
    if (!(st > 0.0)) throw NumericError("constraint '" + c.id + "': target sd is not positive");
    const double vt = st * st;
    return {gaussian_kl(center, spread, mt, vt), (center - mt) / vt, 0.5 * (1.0 / vt - 1.0 / spread)};
  }
  const auto* b = std::get_if<BernoulliTarget>(&*c.target);
  if (!b) throw ConfigError("constraint '" + c.id + "': binary divergence needs a bernoulli target");
  const double q = b->p(as_span(x));
  const Partials p1 = probit_partials(center, spread);
  const double p = std::clamp(p1.o, kProbFloor, 1.0 - kProbFloor);
  const double qc = std::clamp(q, kProbFloor, 1.0 - kProbFloor);
  const double dkl_dp = (p1.o == p) ? std::log(p / qc) - std::log((1.0 - p) / (1.0 - qc)) : 0.0;
  return {bernoulli_kl(p1.o, q), dkl_dp * p1.a, dkl_dp * p1.b};
}

}  // namespace

VariationalParams VariationalParams::constant(Eigen::Index dim, double mu0, double sigma0) {
  if (!(sigma0 > 0.0)) throw ConfigError("variational sigma must be positive");
  return {Eigen::VectorXd::Constant(dim, mu0), Eigen::VectorXd::Constant(dim, std::log(sigma0))};
}

PredictiveMoments regression_moments(double mean, const Eigen::VectorXd& g, const Eigen::VectorXd& sigma,
                                     double noise_sd) {
  return {mean, noise_sd * noise_sd + (sigma.array().square() * g.array().square()).sum()};
}

double binary_probit_probability(double g_dot_mu, double s) { return sigmoid(kappa(s) * g_dot_mu); }

RegressionPredictive prior_predictive_regression(const Mlp& mlp, const Eigen::VectorXd& mu,
                                                 const Eigen::VectorXd& sigma, const Eigen::VectorXd& x) {
  if (mlp.arch().task != Task::regression) throw ConfigError("prior_predictive_regression: network is not regression");
  if (sigma.size() != mu.size()) throw ShapeError("prior_predictive_regression: sigma length mismatch");
  Eigen::VectorXd g(mu.size());
  const double mean = raw_output_gradient<double>(mlp.arch(), as_span(mu), as_span(x), 0, mut_span(g));
  const auto m = regression_moments(mean, g, sigma, mlp.arch().noise_sd);
  return {m.center, m.spread};
}

RegressionPredictive prior_predictive_regression(const Mlp& mlp, const VariationalParams& lambda,
                                                 const Eigen::VectorXd& x) {
  return prior_predictive_regression(mlp, lambda.mu, lambda.sigma(), x);
}

double prior_predictive_binary(const Mlp& mlp, const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
                               const Eigen::VectorXd& x) {
  if (mlp.arch().task != Task::binary_logit) throw ConfigError("prior_predictive_binary: network is not binary_logit");
  if (sigma.size() != mu.size()) throw ShapeError("prior_predictive_binary: sigma length mismatch");
  Eigen::VectorXd g(mu.size());
  raw_output_gradient<double>(mlp.arch(), as_span(mu), as_span(x), 0, mut_span(g));
  return binary_probit_probability(g.dot(mu), (sigma.array().square() * g.array().square()).sum());
}

double prior_predictive_binary(const Mlp& mlp, const VariationalParams& lambda, const Eigen::VectorXd& x) {
  return prior_predictive_binary(mlp, lambda.mu, lambda.sigma(), x);
}

double normal_interval_mass(double mean, double var, const std::vector<NumericInterval>& intervals) {
  const double sd = std::sqrt(var);
  double m = 0.0;
  for (const auto& iv : intervals) m += normal_cdf((iv.upper - mean) / sd) - normal_cdf((iv.lower - mean) / sd);
  return m;
}

double bernoulli_kl(double p, double q) {
  p = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  q = std::clamp(q, kProbFloor, 1.0 - kProbFloor);
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

double gaussian_kl(double m1, double v1, double m2, double v2) {
  return 0.5 * (std::log(v2 / v1) + (v1 + (m1 - m2) * (m1 - m2)) / v2 - 1.0);
}

ObjectiveGradient objective_gradient(const Mlp& mlp, const VariationalParams& lambda, const Constraint& c,
                                     const Eigen::VectorXd& x) {
  const NetworkArch& arch = mlp.arch();
  require_single_output(arch, "aocp");
  const Eigen::VectorXd& mu = lambda.mu;
  const Eigen::VectorXd sigma2 = (2.0 * lambda.log_sigma.array()).exp();
  Eigen::VectorXd g(mu.size());
  const double value = raw_output_gradient<double>(arch, as_span(mu), as_span(x), 0, mut_span(g));
  const bool regression = arch.task == Task::regression;
  const double center = regression ? value : g.dot(mu);
  double spread = (sigma2.array() * g.array().square()).sum();
  if (regression) spread += arch.noise_sd * arch.noise_sd;

  const Partials p = partials(arch, c, x, center, spread);
  // d spread/d mu = 2 H (sigma^2 g); d (g^T mu)/d mu = g + H mu.
  Eigen::VectorXd v = 2.0 * p.b * (sigma2.array() * g.array()).matrix();
  if (!regression) v += p.a * mu;
  const auto hv = hessian_vector_product(mlp, mu, x, v);
  ObjectiveGradient out;
  out.value = p.o;
  out.d_mu = p.a * g + hv.hv;
  out.d_log_sigma = (2.0 * p.b) * (sigma2.array() * g.array().square()).matrix();
  return out;
}

double objective_positive_mass(const Mlp& mlp, const VariationalParams& lambda, const Constraint& c,
                               const Eigen::VectorXd& x) {
  if (!c.deterministic()) throw ContractError("objective_positive_mass: constraint '" + c.id + "' is probabilistic");
  return objective_gradient(mlp, lambda, c, x).value;
}

double objective_divergence(const Mlp& mlp, const VariationalParams& lambda, const Constraint& c,
                            const Eigen::VectorXd& x) {
  if (c.deterministic()) throw ContractError("objective_divergence: constraint '" + c.id + "' is deterministic");
  return objective_gradient(mlp, lambda, c, x).value;
}

double aocp_loss(const Mlp& mlp, const VariationalParams& lambda, const std::vector<Constraint>& constraints,
                 const std::vector<Eigen::MatrixXd>& points) {
  if (points.size() != constraints.size()) throw ShapeError("aocp_loss: one point set per constraint");
  double loss = 0.0;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const double sign = constraints[i].deterministic() ? -1.0 : 1.0;
    double s = 0.0;
    for (Eigen::Index t = 0; t < points[i].rows(); ++t)
      s += objective_gradient(mlp, lambda, constraints[i], points[i].row(t).transpose()).value;
    loss += sign * s / static_cast<double>(points[i].rows());
  }
  return loss;
}

AocpResult optimize_aocp(const Mlp& mlp, const std::vector<Constraint>& constraints, const AocpOptions& options,
                         Rng& rng) {
  require_single_output(mlp.arch(), "optimize_aocp");
  if (options.epochs < 1) throw ConfigError("optimize_aocp: epochs must be at least 1");
  if (options.points_per_epoch < 1) throw ConfigError("optimize_aocp: points_per_epoch must be at least 1");
  for (const auto& c : constraints) {
    c.validate();
    if (region_dim(c.region) != mlp.arch().input_dim)
      throw ShapeError("constraint '" + c.id + "': region dimension differs from the input");
  }
  const auto m = static_cast<Eigen::Index>(mlp.num_params());
  AocpResult result;
  result.params = VariationalParams::constant(m, options.init_mu, options.init_sigma);
  if (options.init_mu_jitter > 0.0) {
    std::normal_distribution<double> jitter(0.0, options.init_mu_jitter);
    for (Eigen::Index i = 0; i < m; ++i) result.params.mu[i] += jitter(rng);
  }
  Eigen::VectorXd theta(2 * m);
  theta << result.params.mu, result.params.log_sigma;
  AdaGrad opt(2 * m, options.learning_rate);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * m);
    double loss = 0.0;
    for (const auto& c : constraints) {
      const Eigen::MatrixXd pts = options.sampler ? options.sampler(c, options.points_per_epoch, rng)
                                                  : sample_region(c.region, options.points_per_epoch, rng);
      const double sign = c.deterministic() ? -1.0 : 1.0;
      const double scale = sign / static_cast<double>(pts.rows());
      for (Eigen::Index t = 0; t < pts.rows(); ++t) {
        const auto og = objective_gradient(mlp, result.params, c, pts.row(t).transpose());
        loss += scale * og.value;
        grad.head(m) += scale * og.d_mu;
        grad.tail(m) += scale * og.d_log_sigma;
      }
    }
    if (!std::isfinite(loss) || !grad.allFinite())
      throw NumericError("aocp: non-finite objective at epoch " + std::to_string(epoch));
    result.loss_history.push_back(loss);
    opt.ascend(theta, -grad);
    result.params.mu = theta.head(m);
    result.params.log_sigma = theta.tail(m);
  }
  return result;
}

double aocp_log_prior(const ParamVector& w, const VariationalParams& lambda, double shrink, Eigen::VectorXd* grad) {
  if (!(shrink >= 1.0)) throw ConfigError("aocp shrink factor must be at least 1");
  const DiagonalGaussian q{lambda.mu, lambda.sigma() / shrink};
  return q.log_density(w, grad);
}

AocpPrior::AocpPrior(VariationalParams lambda, double shrink) : lambda_(std::move(lambda)), shrink_(shrink) {
  if (!(shrink_ >= 1.0)) throw ConfigError("aocp shrink factor must be at least 1");
  if (lambda_.mu.size() != lambda_.log_sigma.size()) throw ShapeError("aocp prior: mu and sigma differ in length");
}

double AocpPrior::log_density(const ParamVector& w, Eigen::VectorXd* grad) const {
  return aocp_log_prior(w, lambda_, shrink_, grad);
}

std::optional<DiagonalGaussian> AocpPrior::diagonal_gaussian() const {
  return DiagonalGaussian{lambda_.mu, lambda_.sigma() / shrink_};
}

}  // namespace ocbnn
