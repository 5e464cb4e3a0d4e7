#include "ocbnn/network.hpp"

#include <cmath>
#include <sstream>

namespace ocbnn {

std::string to_string(Task task) {
  switch (task) {
    case Task::regression:
      return "regression";
    case Task::k_class:
      return "k_class";
    case Task::binary_logit:
      return "binary_logit";
  }
  return "unknown";
}

Task task_from_string(const std::string& name) {
  if (name == "regression") return Task::regression;
  if (name == "k_class" || name == "classification") return Task::k_class;
  if (name == "binary_logit" || name == "binary") return Task::binary_logit;
  throw ConfigError("unknown task '" + name + "'");
}

void NetworkArch::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  if (hidden_layers.empty()) throw ConfigError("at least one hidden layer is required");
  for (int h : hidden_layers) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
  if (task == Task::k_class && num_classes < 2) throw ConfigError("k_class needs num_classes >= 2");
  if (task == Task::regression && !(noise_sd > 0.0)) throw ConfigError("noise_sd must be positive");
}

int NetworkArch::output_dim() const { return task == Task::k_class ? num_classes : 1; }

std::size_t NetworkArch::num_params() const {
  std::size_t total = 0;
  int n_in = input_dim;
  for (int h : hidden_layers) {
    total += static_cast<std::size_t>(h) * (n_in + 1);
    n_in = h;
  }
  total += static_cast<std::size_t>(output_dim()) * (n_in + 1);
  return total;
}

namespace {

std::vector<int> layer_sizes(const NetworkArch& arch) {
  std::vector<int> sizes{arch.input_dim};
  sizes.insert(sizes.end(), arch.hidden_layers.begin(), arch.hidden_layers.end());
  sizes.push_back(arch.output_dim());
  return sizes;
}

}  // namespace

std::vector<Layer> unflatten(const NetworkArch& arch, const ParamVector& w) {
  if (static_cast<std::size_t>(w.size()) != arch.num_params()) throw ShapeError("unflatten: parameter length mismatch");
  const auto sizes = layer_sizes(arch);
  std::vector<Layer> layers;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int n_in = sizes[l], n_out = sizes[l + 1];
    Layer layer;
    layer.weights = Eigen::Map<const RowMatrix>(w.data() + off, n_out, n_in);
    off += static_cast<std::size_t>(n_out) * n_in;
    layer.bias = w.segment(static_cast<Eigen::Index>(off), n_out);
    off += n_out;
    layers.push_back(std::move(layer));
  }
  return layers;
}

ParamVector flatten(const NetworkArch& arch, const std::vector<Layer>& layers) {
  const auto sizes = layer_sizes(arch);
  if (layers.size() + 1 != sizes.size()) throw ShapeError("flatten: wrong number of layers");
  ParamVector w(static_cast<Eigen::Index>(arch.num_params()));
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const int n_in = sizes[l], n_out = sizes[l + 1];
    if (layers[l].weights.rows() != n_out || layers[l].weights.cols() != n_in || layers[l].bias.size() != n_out)
      throw ShapeError("flatten: layer " + std::to_string(l) + " has the wrong shape");
    Eigen::Map<RowMatrix>(w.data() + off, n_out, n_in) = layers[l].weights;
    off += static_cast<std::size_t>(n_out) * n_in;
    w.segment(static_cast<Eigen::Index>(off), n_out) = layers[l].bias;
    off += n_out;
  }
  return w;
}

void Dataset::validate(const NetworkArch& arch) const {
  if (inputs.rows() != targets.size()) throw ShapeError("dataset: inputs and targets differ in length");
  if (inputs.rows() > 0 && inputs.cols() != arch.input_dim) throw ShapeError("dataset: input dimension mismatch");
  if (arch.task == Task::regression) return;
  const int k = arch.task == Task::k_class ? arch.num_classes : 2;
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const double t = targets[i];
    if (t != std::floor(t) || t < 0 || t >= k)
      throw ContractError("dataset: class index out of range at row " + std::to_string(i));
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
    out.targets[static_cast<Eigen::Index>(i)] = targets[static_cast<Eigen::Index>(rows[i])];
  }
  return out;
}

Mlp::Mlp(NetworkArch arch) : arch_(std::move(arch)) {
  arch_.validate();
  num_params_ = arch_.num_params();
  const auto sizes = layer_sizes(arch_);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(sizes[l + 1]) * (sizes[l] + 1);
  }
}

void Mlp::check_params(const ParamVector& w) const {
  if (static_cast<std::size_t>(w.size()) != num_params_)
    throw ShapeError("expected " + std::to_string(num_params_) + " parameters, got " + std::to_string(w.size()));
}

namespace {

struct LayerRef {
  Eigen::Map<const RowMatrix> weights;
  Eigen::Map<const Eigen::VectorXd> bias;
};

LayerRef layer_ref(const ParamVector& w, std::size_t offset, int n_in, int n_out) {
  return {Eigen::Map<const RowMatrix>(w.data() + offset, n_out, n_in),
          Eigen::Map<const Eigen::VectorXd>(w.data() + offset + static_cast<std::size_t>(n_out) * n_in, n_out)};
}

void check_finite(const Eigen::MatrixXd& m, std::size_t layer) {
  if (!m.allFinite()) throw NumericError("non-finite activation in layer " + std::to_string(layer));
}

}  // namespace

Eigen::MatrixXd Mlp::raw_outputs(const ParamVector& w, const Eigen::MatrixXd& inputs) const {
  check_params(w);
  if (inputs.cols() != arch_.input_dim) throw ShapeError("input dimension mismatch");
  const auto sizes = layer_sizes(arch_);
  Eigen::MatrixXd act = inputs;
  for (std::size_t l = 0; l < offsets_.size(); ++l) {
    const auto ref = layer_ref(w, offsets_[l], sizes[l], sizes[l + 1]);
    Eigen::MatrixXd z = act * ref.weights.transpose();
    z.rowwise() += ref.bias.transpose();
    if (l + 1 < offsets_.size()) {
      act = (-z.array().square()).exp().matrix();
    } else {
      act = std::move(z);
    }
    check_finite(act, l);
  }
  return act;
}

Eigen::MatrixXd Mlp::predict(const ParamVector& w, const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd raw = raw_outputs(w, inputs);
  switch (arch_.task) {
    case Task::regression:
      return raw;
    case Task::binary_logit:
      return raw.unaryExpr([](double z) { return sigmoid(z); });
    case Task::k_class:
      for (Eigen::Index i = 0; i < raw.rows(); ++i) raw.row(i) = softmax(raw.row(i).transpose()).transpose();
      return raw;
  }
  return raw;
}

double Mlp::value_and_gradient(const ParamVector& w, const Eigen::MatrixXd& inputs,
                               const RawFunctional& functional, Eigen::VectorXd& grad) const {
  check_params(w);
  if (inputs.cols() != arch_.input_dim) throw ShapeError("input dimension mismatch");
  const auto sizes = layer_sizes(arch_);
  const std::size_t n_layers = offsets_.size();

  // pre[l], hid[l]: pre-activation and exp(-z^2) output of hidden layer l.
  std::vector<Eigen::MatrixXd> pre(n_layers), hid(n_layers);
  Eigen::MatrixXd out;
  const Eigen::MatrixXd* current = &inputs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto ref = layer_ref(w, offsets_[l], sizes[l], sizes[l + 1]);
    Eigen::MatrixXd z = (*current) * ref.weights.transpose();
    z.rowwise() += ref.bias.transpose();
    if (l + 1 < n_layers) {
      hid[l] = (-z.array().square()).exp().matrix();
      check_finite(hid[l], l);
      pre[l] = std::move(z);
      current = &hid[l];
    } else {
      out = std::move(z);
      check_finite(out, l);
    }
  }

  Eigen::MatrixXd d_raw = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  const double value = functional(out, d_raw);
  if (d_raw.rows() != out.rows() || d_raw.cols() != out.cols()) throw ShapeError("functional returned a mis-shaped gradient");

  grad.setZero(static_cast<Eigen::Index>(num_params_));
  Eigen::MatrixXd delta = std::move(d_raw);
  for (std::size_t li = n_layers; li-- > 0;) {
    const int n_in = sizes[li], n_out = sizes[li + 1];
    const Eigen::MatrixXd& layer_in = li == 0 ? inputs : hid[li - 1];
    Eigen::Map<RowMatrix> gW(grad.data() + offsets_[li], n_out, n_in);
    gW.noalias() = delta.transpose() * layer_in;
    grad.segment(static_cast<Eigen::Index>(offsets_[li] + static_cast<std::size_t>(n_out) * n_in), n_out) =
        delta.colwise().sum().transpose();
    if (li == 0) break;
    const auto ref = layer_ref(w, offsets_[li], n_in, n_out);
    Eigen::MatrixXd d_act = delta * ref.weights;
    delta = (d_act.array() * (-2.0 * pre[li - 1].array() * hid[li - 1].array())).matrix();
  }
  if (!grad.allFinite()) throw NumericError("non-finite gradient");
  return value;
}

NetworkOutput forward(const Mlp& mlp, const ParamVector& w, const Eigen::VectorXd& x) {
  if (x.size() != mlp.arch().input_dim) throw ShapeError("forward: input length mismatch");
  NetworkOutput out;
  out.raw = mlp.raw_outputs(w, x.transpose()).row(0).transpose();
  switch (mlp.arch().task) {
    case Task::regression:
      out.value = out.raw;
      break;
    case Task::k_class:
      out.value = softmax(out.raw);
      break;
    case Task::binary_logit:
      out.value = Eigen::VectorXd::Constant(1, sigmoid(out.raw[0]));
      break;
  }
  return out;
}

NetworkOutput forward(const Mlp& mlp, const ParamVector& w, std::span<const double> x) {
  return forward(mlp, w, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())).eval());
}

Eigen::VectorXd grad_params(const Mlp& mlp, const ParamVector& w, const Eigen::VectorXd& x,
                            const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& functional) {
  if (x.size() != mlp.arch().input_dim) throw ShapeError("grad_params: input length mismatch");
  Eigen::VectorXd grad;
  mlp.value_and_gradient(
      w, x.transpose(),
      [&](const Eigen::MatrixXd& raw, Eigen::MatrixXd& d_raw) {
        Eigen::VectorXd r = raw.row(0).transpose();
        Eigen::VectorXd d = Eigen::VectorXd::Zero(r.size());
        const double v = functional(r, d);
        d_raw.row(0) = d.transpose();
        return v;
      },
      grad);
  return grad;
}

HessianVectorProduct hessian_vector_product(const Mlp& mlp, const ParamVector& w, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& v) {
  const std::size_t m = mlp.num_params();
  if (static_cast<std::size_t>(w.size()) != m || static_cast<std::size_t>(v.size()) != m)
    throw ShapeError("hessian_vector_product: length mismatch");
  if (mlp.arch().output_dim() != 1) throw ContractError("hessian_vector_product needs a single output node");
  std::vector<Dual> wd(m), gd(m);
  for (std::size_t i = 0; i < m; ++i) wd[i] = Dual(w[static_cast<Eigen::Index>(i)], v[static_cast<Eigen::Index>(i)]);
  const Dual out = raw_output_gradient<Dual>(mlp.arch(), std::span<const Dual>(wd), std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), 0,
                                             std::span<Dual>(gd));
  HessianVectorProduct r;
  r.value = out.v;
  r.gradient.resize(static_cast<Eigen::Index>(m));
  r.hv.resize(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    r.gradient[static_cast<Eigen::Index>(i)] = gd[i].v;
    r.hv[static_cast<Eigen::Index>(i)] = gd[i].d;
  }
  if (!r.hv.allFinite()) throw NumericError("non-finite Hessian-vector product");
  return r;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Per-row log-likelihood and derivative w.r.t. the raw outputs.
double row_terms(const NetworkArch& arch, const Eigen::MatrixXd& raw, const Eigen::VectorXd& targets,
                 Eigen::MatrixXd* d_raw, double scale, double floor, std::size_t* clamped) {
  const double log_floor = std::log(floor);
  double total = 0.0;
  std::size_t n_clamped = 0;
  const Eigen::Index n = raw.rows();
  switch (arch.task) {
    case Task::regression: {
      const double s2 = arch.noise_sd * arch.noise_sd;
      const double norm = -std::log(arch.noise_sd) - kHalfLog2Pi;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r = targets[i] - raw(i, 0);
        total += norm - 0.5 * r * r / s2;
        if (d_raw) (*d_raw)(i, 0) = scale * r / s2;
      }
      break;
    }
    case Task::binary_logit: {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double z = raw(i, 0);
        const bool positive = targets[i] > 0.5;
        double lp = positive ? log_sigmoid(z) : log_sigmoid(-z);
        double d = (positive ? 1.0 : 0.0) - sigmoid(z);
        if (lp < log_floor) {
          lp = log_floor;
          d = 0.0;
          ++n_clamped;
        }
        total += lp;
        if (d_raw) (*d_raw)(i, 0) = scale * d;
      }
      break;
    }
    case Task::k_class: {
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd logits = raw.row(i).transpose();
        const double mx = logits.maxCoeff();
        const double lse = mx + std::log((logits.array() - mx).exp().sum());
        const auto y = static_cast<Eigen::Index>(targets[i]);
        double lp = logits[y] - lse;
        if (lp < log_floor) {
          lp = log_floor;
          ++n_clamped;
          if (d_raw) d_raw->row(i).setZero();
        } else if (d_raw) {
          Eigen::VectorXd d = -(logits.array() - lse).exp().matrix();
          d[y] += 1.0;
          d_raw->row(i) = scale * d.transpose();
        }
        total += lp;
      }
      break;
    }
  }
  if (clamped) *clamped += n_clamped;
  return scale * total;
}

}  // namespace

double log_likelihood(const Mlp& mlp, const ParamVector& w, const Dataset& data, const LikelihoodOptions& options,
                      std::size_t* clamped) {
  if (data.size() == 0) return 0.0;
  const Eigen::MatrixXd raw = mlp.raw_outputs(w, data.inputs);
  return row_terms(mlp.arch(), raw, data.targets, nullptr, 1.0, options.probability_floor, clamped);
}

double log_likelihood_and_gradient(const Mlp& mlp, const ParamVector& w, const Dataset& data, Eigen::VectorXd& grad,
                                   double scale, const LikelihoodOptions& options, std::size_t* clamped) {
  if (data.size() == 0) {
    grad.setZero(static_cast<Eigen::Index>(mlp.num_params()));
    return 0.0;
  }
  return mlp.value_and_gradient(
      w, data.inputs,
      [&](const Eigen::MatrixXd& raw, Eigen::MatrixXd& d_raw) {
        return row_terms(mlp.arch(), raw, data.targets, &d_raw, scale, options.probability_floor, clamped);
      },
      grad);
}

}  // namespace ocbnn
