#include "ocbnn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>

#include "ocbnn/optim.hpp"

namespace ocbnn {

namespace {

Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  // row-major draw order so each row is one vector
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

}  // namespace

// --- likelihoods and posterior ------------------------------------------------

DataLikelihood::DataLikelihood(Mlp mlp, Dataset data, std::size_t batch_size, LikelihoodOptions options)
    : mlp_(std::move(mlp)), data_(std::move(data)), batch_size_(batch_size), options_(options) {
  data_.validate(mlp_.arch());
  if (batch_size_ == 0 || batch_size_ >= data_.size()) {
    batch_size_ = 0;
    batch_ = data_;
    return;
  }
  order_.resize(data_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  batch_ = data_.subset(std::span(order_).first(batch_size_));
  cursor_ = batch_size_;
}

double DataLikelihood::log_likelihood(const ParamVector& w, Eigen::VectorXd* grad) const {
  if (batch_.size() == 0) {
    if (grad) grad->setZero(static_cast<Eigen::Index>(mlp_.num_params()));
    return 0.0;
  }
  const double scale = static_cast<double>(data_.size()) / static_cast<double>(batch_.size());
  if (grad) return log_likelihood_and_gradient(mlp_, w, batch_, *grad, scale, options_, &clamped_);
  return scale * ocbnn::log_likelihood(mlp_, w, batch_, options_, &clamped_);
}

void DataLikelihood::refresh(Rng& rng) {
  if (batch_size_ == 0) return;
  if (cursor_ + batch_size_ > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
  }
  batch_ = data_.subset(std::span(order_).subspan(cursor_, batch_size_));
  cursor_ += batch_size_;
}

LogPosterior::LogPosterior(std::shared_ptr<const LogPrior> prior, std::shared_ptr<Likelihood> likelihood)
    : prior_(std::move(prior)), likelihood_(std::move(likelihood)) {
  if (!prior_) throw ContractError("LogPosterior needs a prior");
}

double LogPosterior::value(const ParamVector& w) const {
  double v = prior_->log_density(w, nullptr);
  if (likelihood_) v += likelihood_->log_likelihood(w, nullptr);
  return v;
}

double LogPosterior::value_and_gradient(const ParamVector& w, Eigen::VectorXd& grad) const {
  double v = prior_->log_density(w, &grad);
  if (likelihood_) {
    Eigen::VectorXd g;
    v += likelihood_->log_likelihood(w, &g);
    grad += g;
  }
  return v;
}

void LogPosterior::refresh(Rng& rng) const {
  if (likelihood_) likelihood_->refresh(rng);
}

void PosteriorSamples::validate() const {
  if (samples.rows() < 1) throw ContractError("posterior samples: need at least one sample");
  if (!samples.allFinite()) throw NumericError("posterior samples contain non-finite values");
}

// --- HMC ----------------------------------------------------------------------

double leapfrog(const GradientFn& log_density, ParamVector& w, Eigen::VectorXd& p, Eigen::VectorXd& grad, double step,
                int steps) {
  double lp = 0.0;
  p += 0.5 * step * grad;
  for (int s = 0; s < steps; ++s) {
    w += step * p;
    lp = log_density(w, grad);
    if (s + 1 < steps) p += step * grad;
  }
  p += 0.5 * step * grad;
  return lp;
}

PosteriorSamples hmc(const LogPosterior& post, const ParamVector& init, const HmcOptions& options, Rng& rng) {
  if (options.leapfrog_steps < 1) throw ConfigError("hmc: leapfrog_steps must be at least 1");
  if (!(options.step_size > 0.0)) throw ConfigError("hmc: step_size must be positive");
  if (options.thin < 1 || options.n_collect < 1) throw ConfigError("hmc: thin and n_collect must be at least 1");
  if (static_cast<std::size_t>(init.size()) != post.dim()) throw ShapeError("hmc: initial point has the wrong length");

  const GradientFn density = [&](const ParamVector& w, Eigen::VectorXd& g) { return post.value_and_gradient(w, g); };
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  PosteriorSamples out;
  out.method = "hmc";
  out.samples.resize(static_cast<Eigen::Index>(options.n_collect), init.size());
  out.log_posterior.reserve(options.n_collect);

  ParamVector w = init;
  Eigen::VectorXd grad;
  post.refresh(rng);
  double lp = density(w, grad);
  if (!std::isfinite(lp)) throw SamplingError("hmc: initial log density is not finite");

  double step = options.step_size;
  std::deque<bool> window;
  int failures = 0;
  std::size_t collected = 0;
  const std::size_t total = options.burn_in + options.n_collect * options.thin;
  auto& d = out.diagnostics;

  for (std::size_t it = 0; it < total; ++it) {
    const bool burning = it < options.burn_in;
    if (post.likelihood()) {
      post.refresh(rng);
      lp = density(w, grad);
    }
    Eigen::VectorXd p = standard_normal(w.size(), rng);
    const double h0 = -lp + 0.5 * p.squaredNorm();

    ParamVector w1 = w;
    Eigen::VectorXd p1 = p;
    Eigen::VectorXd g1 = grad;
    double lp1;
    try {
      lp1 = leapfrog(density, w1, p1, g1, step, options.leapfrog_steps);
    } catch (const NumericError&) {
      lp1 = std::numeric_limits<double>::quiet_NaN();
    }
    const double h1 = -lp1 + 0.5 * p1.squaredNorm();
    const double log_u = std::log(uniform(rng));

    bool accept = false;
    if (!std::isfinite(h1)) {
      if (++failures > options.max_step_retries)
        throw SamplingError("hmc: energy stayed non-finite after " + std::to_string(options.max_step_retries) +
                            " step halvings");
      step *= 0.5;
      ++d.step_retries;
    } else {
      failures = 0;
      accept = log_u < h0 - h1;
    }
    if (accept) {
      w = std::move(w1);
      grad = std::move(g1);
      lp = lp1;
    }

    if (burning) {
      if (options.adapt) {
        window.push_back(accept);
        if (window.size() > options.adapt_window) window.pop_front();
        const double rate =
            static_cast<double>(std::count(window.begin(), window.end(), true)) / static_cast<double>(window.size());
        step *= rate > options.target_accept ? 1.02 : 0.98;
      }
    } else {
      ++d.proposals;
      if (accept) ++d.accepted;
      if ((it - options.burn_in + 1) % options.thin == 0) {
        out.samples.row(static_cast<Eigen::Index>(collected++)) = w.transpose();
        out.log_posterior.push_back(lp);
      }
    }
  }
  d.iterations = total;
  d.final_step_size = step;
  d.acceptance_rate = static_cast<double>(d.accepted) / static_cast<double>(d.proposals);
  return out;
}

// --- SVGD ---------------------------------------------------------------------

double svgd_bandwidth(const Eigen::MatrixXd& particles, double floor) {
  const Eigen::Index n = particles.rows();
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d2.push_back((particles.row(i) - particles.row(j)).squaredNorm());
  if (d2.empty()) return floor;
  const double med = empirical_quantile(std::move(d2), 0.5);
  return std::max(med / std::log(static_cast<double>(n) + 1.0), floor);
}

Eigen::MatrixXd svgd_direction(const Eigen::MatrixXd& particles, const Eigen::MatrixXd& grads, double floor) {
  if (particles.rows() != grads.rows() || particles.cols() != grads.cols())
    throw ShapeError("svgd_direction: particles and gradients differ in shape");
  const Eigen::Index n = particles.rows();
  const double h = svgd_bandwidth(particles, floor);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::exp(-(particles.row(i) - particles.row(j)).squaredNorm() / h);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  // sum_i grad_{w_i} k(w_i, w_j) = (2 / h) sum_i k_ij (w_j - w_i)
  const Eigen::VectorXd row_sums = k.rowwise().sum();
  Eigen::MatrixXd repulse = row_sums.asDiagonal() * particles - k * particles;
  return (k * grads + (2.0 / h) * repulse) / static_cast<double>(n);
}

PosteriorSamples svgd(const LogPosterior& post, const SvgdOptions& options, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(options.particles);
  const auto m = static_cast<Eigen::Index>(post.dim());
  Eigen::MatrixXd init = standard_normal(n, m, rng);
  if (const auto g = post.prior().diagonal_gaussian()) {
    init = (init.array().rowwise() * g->sd.transpose().array()).rowwise() + g->mean.transpose().array();
  } else {
    init *= options.init_sd;
  }
  return svgd(post, std::move(init), options, rng);
}

PosteriorSamples svgd(const LogPosterior& post, Eigen::MatrixXd initial, const SvgdOptions& options, Rng& rng) {
  if (initial.rows() < 1) throw ConfigError("svgd: need at least one particle");
  if (static_cast<std::size_t>(initial.cols()) != post.dim()) throw ShapeError("svgd: particle length mismatch");
  const Eigen::Index n = initial.rows(), m = initial.cols();
  Eigen::MatrixXd particles = std::move(initial);
  Eigen::MatrixXd grads(n, m);
  AdaGrad opt(n * m, options.learning_rate);
  Eigen::VectorXd g;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    post.refresh(rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lp = post.value_and_gradient(particles.row(i).transpose(), g);
      if (!std::isfinite(lp) || !g.allFinite())
        throw NumericError("svgd: non-finite log density at iteration " + std::to_string(it));
      grads.row(i) = g.transpose();
    }
    const Eigen::MatrixXd phi = svgd_direction(particles, grads, options.bandwidth_floor);
    Eigen::Map<Eigen::VectorXd> flat(particles.data(), n * m);
    opt.ascend(flat, Eigen::Map<const Eigen::VectorXd>(phi.data(), n * m));
  }
  PosteriorSamples out;
  out.method = "svgd";
  out.samples = std::move(particles);
  out.diagnostics.iterations = options.iterations;
  for (Eigen::Index i = 0; i < n; ++i) out.log_posterior.push_back(post.value(out.samples.row(i).transpose()));
  return out;
}

// --- BBB ----------------------------------------------------------------------

double diagonal_kl(const VariationalParams& q, const DiagonalGaussian& p, Eigen::VectorXd* d_mu,
                   Eigen::VectorXd* d_log_sigma) {
  if (q.size() != p.mean.size()) throw ShapeError("diagonal_kl: length mismatch");
  const Eigen::ArrayXd s2 = p.sd.array().square();
  const Eigen::ArrayXd q2 = (2.0 * q.log_sigma.array()).exp();
  const Eigen::ArrayXd diff = q.mu.array() - p.mean.array();
  if (d_mu) *d_mu = (diff / s2).matrix();
  if (d_log_sigma) *d_log_sigma = (q2 / s2 - 1.0).matrix();
  return (p.sd.array().log() - q.log_sigma.array() + (q2 + diff.square()) / (2.0 * s2) - 0.5).sum();
}

double negative_elbo(const LogPosterior& post, const VariationalParams& q, const Eigen::MatrixXd& eps,
                     Eigen::VectorXd* d_mu, Eigen::VectorXd* d_log_sigma) {
  const Eigen::Index m = q.size();
  if (eps.cols() != m || eps.rows() < 1) throw ShapeError("negative_elbo: noise draws have the wrong shape");
  const Eigen::VectorXd sigma = q.sigma();
  const auto gaussian = post.prior().diagonal_gaussian();
  const double inv_n = 1.0 / static_cast<double>(eps.rows());
  const bool want_grad = d_mu || d_log_sigma;
  Eigen::VectorXd gm = Eigen::VectorXd::Zero(m), gs = Eigen::VectorXd::Zero(m), g;
  double value = 0.0;
  for (Eigen::Index r = 0; r < eps.rows(); ++r) {
    const Eigen::VectorXd e = eps.row(r).transpose();
    const ParamVector w = q.mu + sigma.cwiseProduct(e);
    // d/dmu f(w) = f'(w); d/dlog sigma f(w) = f'(w) * sigma * eps
    if (auto* lik = post.likelihood()) {
      value -= inv_n * lik->log_likelihood(w, want_grad ? &g : nullptr);
      if (want_grad) {
        gm -= inv_n * g;
        gs -= inv_n * g.cwiseProduct(sigma).cwiseProduct(e);
      }
    }
    if (!gaussian) {
      const double log_q = -0.5 * e.squaredNorm() - q.log_sigma.sum() -
                           0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(m);
      value += inv_n * (log_q - post.prior().log_density(w, want_grad ? &g : nullptr));
      if (want_grad) {
        gm -= inv_n * g;
        gs -= inv_n * (Eigen::VectorXd::Ones(m) + g.cwiseProduct(sigma).cwiseProduct(e));
      }
    }
  }
  if (gaussian) {
    Eigen::VectorXd km, ks;
    value += diagonal_kl(q, *gaussian, &km, &ks);
    gm += km;
    gs += ks;
  }
  if (d_mu) *d_mu = std::move(gm);
  if (d_log_sigma) *d_log_sigma = std::move(gs);
  return value;
}

BbbResult bbb(const LogPosterior& post, const BbbOptions& options, Rng& rng) {
  if (options.n_eps < 1 || options.n_samples < 1) throw ConfigError("bbb: n_eps and n_samples must be at least 1");
  const auto m = static_cast<Eigen::Index>(post.dim());
  BbbResult result;
  result.params = VariationalParams::constant(m, options.init_mu, options.init_sigma);
  if (options.init_mu_jitter > 0.0) {
    std::normal_distribution<double> jitter(0.0, options.init_mu_jitter);
    for (Eigen::Index i = 0; i < m; ++i) result.params.mu[i] += jitter(rng);
  }
  Eigen::VectorXd theta(2 * m);
  theta << result.params.mu, result.params.log_sigma;
  AdaGrad opt(2 * m, options.learning_rate);
  auto& history = result.samples.diagnostics.elbo_history;
  history.reserve(options.epochs);
  Eigen::VectorXd gm, gs, grad(2 * m);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    post.refresh(rng);
    const Eigen::MatrixXd eps = standard_normal(static_cast<Eigen::Index>(options.n_eps), m, rng);
    const double loss = negative_elbo(post, result.params, eps, &gm, &gs);
    if (!std::isfinite(loss) || !gm.allFinite() || !gs.allFinite())
      throw NumericError("bbb: non-finite ELBO at epoch " + std::to_string(epoch));
    history.push_back(-loss);
    grad << gm, gs;
    opt.ascend(theta, -grad);
    result.params.mu = theta.head(m);
    result.params.log_sigma = theta.tail(m);
    if (options.on_epoch) options.on_epoch(epoch, result.params);
  }
  const Eigen::MatrixXd eps = standard_normal(static_cast<Eigen::Index>(options.n_samples), m, rng);
  result.samples.method = "bbb";
  result.samples.samples =
      (eps.array().rowwise() * result.params.sigma().transpose().array()).rowwise() +
      result.params.mu.transpose().array();
  result.samples.diagnostics.iterations = options.epochs;
  return result;
}

// --- predictive ---------------------------------------------------------------

double empirical_quantile(std::vector<double> values, double level) {
  if (values.empty()) throw ContractError("empirical_quantile: no values");
  if (!(level >= 0.0 && level <= 1.0)) throw ContractError("empirical_quantile: level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = level * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

PredictiveSummary posterior_predictive(const PosteriorSamples& samples, const Mlp& mlp, const Eigen::MatrixXd& inputs,
                                       const std::vector<double>& levels) {
  samples.validate();
  const auto s = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index n = inputs.rows();
  const NetworkArch& arch = mlp.arch();
  PredictiveSummary out;
  out.levels = levels;
  if (arch.task == Task::regression) {
    out.sample_outputs.resize(s, n);
    for (Eigen::Index i = 0; i < s; ++i)
      out.sample_outputs.row(i) = mlp.predict(samples.samples.row(i).transpose(), inputs).col(0).transpose();
    out.mean = out.sample_outputs.colwise().mean().transpose();
    out.quantiles.resize(n, static_cast<Eigen::Index>(levels.size()));
    std::vector<double> col(static_cast<std::size_t>(s));
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < s; ++i) col[static_cast<std::size_t>(i)] = out.sample_outputs(i, j);
      for (std::size_t l = 0; l < levels.size(); ++l)
        out.quantiles(j, static_cast<Eigen::Index>(l)) = empirical_quantile(col, levels[l]);
    }
    return out;
  }
  const int k = arch.task == Task::k_class ? arch.num_classes : 2;
  out.probabilities = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < s; ++i) {
    const Eigen::MatrixXd v = mlp.predict(samples.samples.row(i).transpose(), inputs);
    if (arch.task == Task::k_class) {
      out.probabilities += v;
    } else {
      out.probabilities.col(0).array() += 1.0 - v.col(0).array();
      out.probabilities.col(1) += v.col(0);
    }
  }
  out.probabilities /= static_cast<double>(s);
  return out;
}

Eigen::VectorXd point_predictions(const PredictiveSummary& summary, Task task) {
  if (task == Task::regression) return summary.mean;
  const Eigen::MatrixXd& p = summary.probabilities;
  Eigen::VectorXd out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j)
      if (p(i, j) > p(i, best)) best = j;
    out[i] = static_cast<double>(best);
  }
  return out;
}

}  // namespace ocbnn
