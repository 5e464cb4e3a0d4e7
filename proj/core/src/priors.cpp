#include "ocbnn/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ocbnn {

namespace {

constexpr double kFloor = 1e-12;
const double kLogFloor = std::log(kFloor);
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::span<const double> as_span(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

// Log-softmax of a logit row.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

// Class log-probabilities from a raw output row for either classification head.
Eigen::VectorXd class_log_probs(const NetworkArch& arch, const Eigen::VectorXd& raw) {
  if (arch.task == Task::k_class) return log_softmax(raw);
  Eigen::VectorXd lp(2);
  lp[0] = log_sigmoid(-raw[0]);
  lp[1] = log_sigmoid(raw[0]);
  return lp;
}

// d/d raw of sum_i coef_i log p_i, where rows flagged in `active` contribute.
Eigen::VectorXd class_log_prob_gradient(const NetworkArch& arch, const Eigen::VectorXd& log_p,
                                        const Eigen::VectorXd& coef, const std::vector<bool>& active) {
  const Eigen::VectorXd p = log_p.array().exp();
  double total = 0.0;
  for (int i = 0; i < coef.size(); ++i)
    if (active[i]) total += coef[i];
  if (arch.task == Task::k_class) {
    Eigen::VectorXd g = -p * total;
    for (int j = 0; j < coef.size(); ++j)
      if (active[j]) g[j] += coef[j];
    return g;
  }
  // binary: d log p1/d phi = 1 - p1, d log p0/d phi = -p1
  Eigen::VectorXd g(1);
  g[0] = (active[1] ? coef[1] : 0.0) - p[1] * total;
  return g;
}

double dirichlet_normalizer(const Eigen::VectorXd& alpha) {
  double s = std::lgamma(alpha.sum());
  for (double a : alpha) s -= std::lgamma(a);
  return s;
}

// Forbidden output set at x as groups of inequalities g(y) <= 0.
double neg_exp_point(const Constraint& c, const NegExpFamily& f, const Eigen::VectorXd& x, double y, double* d_dy) {
  if (c.polarity == Polarity::negative) {
    if (const auto* list = std::get_if<InequalityList>(&*c.rule))
      return log_neg_exponential(x, y, list->inequalities, f.gamma, f.tau0, f.tau1, d_dy);
  }
  const auto members = rule_intervals(*c.rule, x);
  const auto forbidden = c.polarity == Polarity::negative ? members : complement(members);
  Dual total(0.0);
  const Dual yd(y, 1.0);
  for (const auto& iv : forbidden) {
    Dual prod(1.0);
    if (std::isfinite(iv.lower)) prod *= soft_indicator<Dual>(Dual(iv.lower) - yd, f.tau0, f.tau1);
    if (std::isfinite(iv.upper)) prod *= soft_indicator<Dual>(yd - Dual(iv.upper), f.tau0, f.tau1);
    total += prod;
  }
  if (d_dy) *d_dy = -f.gamma * total.d;
  return -f.gamma * total.v;
}

}  // namespace

double DiagonalGaussian::log_density(const ParamVector& w, Eigen::VectorXd* grad) const {
  if (w.size() != mean.size() || sd.size() != mean.size()) throw ShapeError("DiagonalGaussian: length mismatch");
  const Eigen::ArrayXd z = (w - mean).array() / sd.array();
  if (grad) *grad = -(z / sd.array()).matrix();
  return -0.5 * z.square().sum() - sd.array().log().sum() - kHalfLog2Pi * static_cast<double>(w.size());
}

double log_base_prior(const ParamVector& w, double sd, Eigen::VectorXd* grad) {
  if (!(sd > 0.0)) throw ConfigError("base prior sd must be positive");
  if (grad) *grad = -w / (sd * sd);
  const double n = static_cast<double>(w.size());
  return -0.5 * w.squaredNorm() / (sd * sd) - n * (std::log(sd) + kHalfLog2Pi);
}

double log_gmm_positive(double y, std::span<const double> means, std::span<const double> weights, double sd,
                        double* d_dy) {
  if (means.empty()) throw ConfigError("gaussian mixture needs at least one component");
  if (!weights.empty() && weights.size() != means.size())
    throw ConfigError("gaussian mixture weights and means differ in length");
  if (!(sd > 0.0)) throw ConfigError("gaussian mixture sd must be positive");
  const std::size_t k = means.size();
  std::vector<double> terms(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double wk = weights.empty() ? 1.0 / static_cast<double>(k) : weights[i];
    const double z = (y - means[i]) / sd;
    terms[i] = std::log(wk) - 0.5 * z * z - std::log(sd) - kHalfLog2Pi;
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) {
    if (d_dy) *d_dy = 0.0;
    return m;
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  const double lse = m + std::log(s);
  if (d_dy) {
    double d = 0.0;
    for (std::size_t i = 0; i < k; ++i) d += std::exp(terms[i] - lse) * (-(y - means[i]) / (sd * sd));
    *d_dy = d;
  }
  return lse;
}

Eigen::VectorXd dirichlet_alpha(int num_classes, std::span<const int> allowed, double gamma, double c) {
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(num_classes, gamma * (1.0 - c));
  for (int k : allowed) {
    if (k < 0 || k >= num_classes) throw ContractError("dirichlet: class index out of range");
    alpha[k] = gamma;
  }
  return alpha;
}

double log_dirichlet(const Eigen::VectorXd& p, const Eigen::VectorXd& alpha) {
  if (p.size() != alpha.size()) throw ShapeError("log_dirichlet: length mismatch");
  if ((alpha.array() <= 0.0).any()) throw ConfigError("dirichlet concentrations must be positive");
  double s = dirichlet_normalizer(alpha);
  for (int i = 0; i < p.size(); ++i) s += (alpha[i] - 1.0) * std::log(std::clamp(p[i], kFloor, 1.0));
  return s;
}

double log_dirichlet_positive(const Eigen::VectorXd& p, std::span<const int> allowed, double gamma, double c) {
  if (!(gamma >= 1.0) || !(c > 0.0 && c < 1.0)) throw ConfigError("dirichlet needs gamma >= 1 and 0 < c < 1");
  if (allowed.empty()) throw ContractError("dirichlet: allowed class set is empty");
  if (std::abs(p.sum() - 1.0) > 1e-9 || (p.array() < -1e-9).any())
    throw ContractError("log_dirichlet_positive: p is not on the simplex");
  return log_dirichlet(p, dirichlet_alpha(static_cast<int>(p.size()), allowed, gamma, c));
}

double log_neg_exponential(const Eigen::VectorXd& x, double y, std::span<const Expression> inequalities, double gamma,
                           double tau0, double tau1, double* d_dy) {
  Dual prod(1.0);
  for (std::size_t i = 0; i < inequalities.size(); ++i) {
    const Dual g = inequalities[i].eval_dual(as_span(x), y);
    if (!std::isfinite(g.v) || !std::isfinite(g.d))
      throw NumericError("negative exponential: inequality " + std::to_string(i) + " is not finite");
    prod *= soft_indicator<Dual>(g, tau0, tau1);
  }
  if (d_dy) *d_dy = -gamma * prod.d;
  return -gamma * prod.v;
}

std::string family_name(const CocpFamily& family) {
  return std::visit(Overloaded{[](const GmmFamily&) { return std::string("gmm"); },
                               [](const DirichletFamily&) { return std::string("dirichlet"); },
                               [](const NegExpFamily&) { return std::string("neg_exp"); },
                               [](const TargetFamily&) { return std::string("target"); }},
                    family);
}

void validate_term(const NetworkArch& arch, const CocpTerm& term) {
  const Constraint& c = term.constraint;
  c.validate();
  const std::string ctx = "constraint '" + c.id + "' (" + family_name(term.family) + ")";
  const bool regression = arch.task == Task::regression;
  if (term.sample.points.cols() != arch.input_dim) throw ShapeError(ctx + ": sample dimension differs from the input");
  std::visit(Overloaded{
                 [&](const GmmFamily& f) {
                   if (!regression) throw ConfigError(ctx + ": gaussian mixture needs a regression network");
                   if (c.polarity != Polarity::positive || !std::holds_alternative<ValueSet>(*c.rule))
                     throw ConfigError(ctx + ": gaussian mixture needs a positive value-set rule");
                   const auto& vs = std::get<ValueSet>(*c.rule);
                   if (!f.weights.empty()) {
                     if (f.weights.size() != vs.values.size())
                       throw ConfigError(ctx + ": one mixture weight per value is required");
                     double s = 0.0;
                     for (double wk : f.weights) s += wk;
                     if (std::abs(s - 1.0) > 1e-9) throw ConfigError(ctx + ": mixture weights must sum to 1");
                   }
                   if (!(f.sd > 0.0)) throw ConfigError(ctx + ": sd must be positive");
                 },
                 [&](const DirichletFamily& f) {
                   if (regression) throw ConfigError(ctx + ": dirichlet needs a classification network");
                   if (!c.deterministic()) throw ConfigError(ctx + ": dirichlet needs a deterministic rule");
                   if (!(f.gamma >= 1.0) || !(f.c > 0.0 && f.c < 1.0))
                     throw ConfigError(ctx + ": dirichlet needs gamma >= 1 and 0 < c < 1");
                 },
                 [&](const NegExpFamily& f) {
                   if (!regression) throw ConfigError(ctx + ": negative exponential needs a regression network");
                   if (!c.deterministic()) throw ConfigError(ctx + ": negative exponential needs a deterministic rule");
                   if (std::holds_alternative<ValueSet>(*c.rule))
                     throw ConfigError(ctx + ": negative exponential needs intervals or inequalities");
                   if (!(f.gamma > 0.0) || !(f.tau0 > 0.0) || !(f.tau1 > 0.0))
                     throw ConfigError(ctx + ": gamma, tau0 and tau1 must be positive");
                 },
                 [&](const TargetFamily&) {
                   if (c.deterministic()) throw ConfigError(ctx + ": target family needs a probabilistic constraint");
                   const bool ok = regression ? std::holds_alternative<GaussianTarget>(*c.target)
                                   : arch.task == Task::binary_logit
                                       ? std::holds_alternative<BernoulliTarget>(*c.target)
                                       : std::holds_alternative<CategoricalTarget>(*c.target);
                   if (!ok) throw ConfigError(ctx + ": target distribution does not match the network task");
                 },
             },
             term.family);
}

double cocp_term_log_density(const NetworkArch& arch, const CocpTerm& term, const Eigen::MatrixXd& raw,
                             Eigen::MatrixXd* d_raw) {
  const Constraint& c = term.constraint;
  const Eigen::MatrixXd& pts = term.sample.points;
  const Eigen::Index n = pts.rows();
  if (raw.rows() != n) throw ShapeError("cocp: raw output rows differ from sample size");
  if (d_raw) d_raw->setZero(raw.rows(), raw.cols());
  double total = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::VectorXd x = pts.row(t).transpose();
    const Eigen::VectorXd r = raw.row(t).transpose();
    double value = 0.0;
    std::visit(Overloaded{
                   [&](const GmmFamily& f) {
                     const auto& vs = std::get<ValueSet>(*c.rule);
                     std::vector<double> means;
                     means.reserve(vs.values.size());
                     for (const auto& e : vs.values) means.push_back(e(as_span(x)));
                     double d = 0.0;
                     value = log_gmm_positive(r[0], means, f.weights, f.sd, d_raw ? &d : nullptr);
                     if (d_raw) (*d_raw)(t, 0) = d;
                   },
                   [&](const DirichletFamily& f) {
                     const int k = arch.task == Task::k_class ? arch.num_classes : 2;
                     const auto allowed = permitted_classes(c, x, k);
                     const Eigen::VectorXd alpha = dirichlet_alpha(k, allowed, f.gamma, f.c);
                     const Eigen::VectorXd log_p = class_log_probs(arch, r);
                     std::vector<bool> active(k);
                     value = dirichlet_normalizer(alpha);
                     for (int i = 0; i < k; ++i) {
                       active[i] = log_p[i] > kLogFloor;
                       value += (alpha[i] - 1.0) * (active[i] ? log_p[i] : kLogFloor);
                     }
                     if (d_raw)
                       d_raw->row(t) =
                           class_log_prob_gradient(arch, log_p, (alpha.array() - 1.0).matrix(), active).transpose();
                   },
                   [&](const NegExpFamily& f) {
                     double d = 0.0;
                     value = neg_exp_point(c, f, x, r[0], d_raw ? &d : nullptr);
                     if (d_raw) (*d_raw)(t, 0) = d;
                   },
                   [&](const TargetFamily&) {
                     if (const auto* g = std::get_if<GaussianTarget>(&*c.target)) {
                       const double m = g->mean(as_span(x));
                       const double s = g->sd(as_span(x));
                       if (!(s > 0.0)) throw NumericError("constraint '" + c.id + "': target sd is not positive");
                       const double z = (r[0] - m) / s;
                       value = -0.5 * z * z - std::log(s) - kHalfLog2Pi;
                       if (d_raw) (*d_raw)(t, 0) = -z / s;
                       return;
                     }
                     Eigen::VectorXd q;
                     if (const auto* b = std::get_if<BernoulliTarget>(&*c.target)) {
                       const double p1 = std::clamp(b->p(as_span(x)), 0.0, 1.0);
                       q.resize(2);
                       q << 1.0 - p1, p1;
                     } else {
                       const auto& probs = std::get<CategoricalTarget>(*c.target).probs;
                       q.resize(static_cast<Eigen::Index>(probs.size()));
                       for (std::size_t i = 0; i < probs.size(); ++i) q[i] = probs[i](as_span(x));
                     }
                     const Eigen::VectorXd log_p = class_log_probs(arch, r);
                     if (log_p.size() != q.size())
                       throw ShapeError("constraint '" + c.id + "': target has the wrong number of classes");
                     std::vector<bool> active(static_cast<std::size_t>(q.size()), true);
                     value = q.dot(log_p);
                     if (d_raw) d_raw->row(t) = class_log_prob_gradient(arch, log_p, q, active).transpose();
                   },
               },
               term.family);
    total += value;
  }
  return total;
}

double log_cocp(const Mlp& mlp, const ParamVector& w, double base_sd, std::span<const CocpTerm> terms,
                Eigen::VectorXd* grad) {
  double total = log_base_prior(w, base_sd, grad);
  Eigen::VectorXd g_term;
  for (const auto& term : terms) {
    if (grad) {
      const RawFunctional functional = [&](const Eigen::MatrixXd& raw, Eigen::MatrixXd& d_raw) {
        return cocp_term_log_density(mlp.arch(), term, raw, &d_raw);
      };
      total += mlp.value_and_gradient(w, term.sample.points, functional, g_term);
      *grad += g_term;
    } else {
      total += cocp_term_log_density(mlp.arch(), term, mlp.raw_outputs(w, term.sample.points), nullptr);
    }
  }
  return total;
}

Eigen::VectorXd grad_log_cocp(const Mlp& mlp, const ParamVector& w, double base_sd, std::span<const CocpTerm> terms) {
  Eigen::VectorXd g;
  log_cocp(mlp, w, base_sd, terms, &g);
  return g;
}

GaussianPrior::GaussianPrior(std::size_t dim, double sd) : dim_(dim), sd_(sd) {
  if (!(sd > 0.0)) throw ConfigError("gaussian prior sd must be positive");
}

double GaussianPrior::log_density(const ParamVector& w, Eigen::VectorXd* grad) const {
  if (static_cast<std::size_t>(w.size()) != dim_) throw ShapeError("gaussian prior: parameter length mismatch");
  return log_base_prior(w, sd_, grad);
}

std::optional<DiagonalGaussian> GaussianPrior::diagonal_gaussian() const {
  const auto n = static_cast<Eigen::Index>(dim_);
  return DiagonalGaussian{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, sd_)};
}

CocpPrior::CocpPrior(Mlp mlp, double base_sd, std::vector<CocpTerm> terms)
    : mlp_(std::move(mlp)), base_sd_(base_sd), terms_(std::move(terms)) {
  if (!(base_sd_ > 0.0)) throw ConfigError("base prior sd must be positive");
  for (const auto& t : terms_) validate_term(mlp_.arch(), t);
}

double CocpPrior::log_density(const ParamVector& w, Eigen::VectorXd* grad) const {
  return log_cocp(mlp_, w, base_sd_, terms_, grad);
}

void CocpPrior::resample(Rng& rng) {
  for (auto& t : terms_) t.sample.points = sample_region(t.constraint.region, t.sample.size(), rng);
}

}  // namespace ocbnn
