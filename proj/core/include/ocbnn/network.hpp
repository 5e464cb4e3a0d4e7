#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/dual.hpp"
#include "ocbnn/error.hpp"

namespace ocbnn {

enum class Task { regression, k_class, binary_logit };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

/// Fixed multilayer perceptron with exp(-z^2) hidden units.
///
/// Output head by task:
///   regression    one linear node, Gaussian noise with sd `noise_sd`
///   k_class       `num_classes` linear nodes followed by softmax
///   binary_logit  one linear node phi(x), probability sigmoid(phi(x))
struct NetworkArch {
  int input_dim = 1;
  std::vector<int> hidden_layers{10};
  Task task = Task::regression;
  int num_classes = 2;
  double noise_sd = 0.1;

  void validate() const;
  int output_dim() const;
  std::size_t num_params() const;
  bool operator==(const NetworkArch&) const = default;
};

/// Flattened weights and biases. Layout is layer-major: for each layer the
/// (out x in) weight matrix in row-major order, then its bias vector.
using ParamVector = Eigen::VectorXd;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Layer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

std::vector<Layer> unflatten(const NetworkArch& arch, const ParamVector& w);
ParamVector flatten(const NetworkArch& arch, const std::vector<Layer>& layers);

/// Observed data. Targets hold real values for regression and class indices
/// (stored as doubles) for classification.
struct Dataset {
  Eigen::MatrixXd inputs;   // N x Q
  Eigen::VectorXd targets;  // N

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  void validate(const NetworkArch& arch) const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct NetworkOutput {
  Eigen::VectorXd raw;    // pre-head linear outputs (logits / phi / mean)
  Eigen::VectorXd value;  // regression mean, class probabilities, or sigmoid(phi)
};

/// Maps the N x out raw outputs to a scalar and writes d scalar / d raw.
using RawFunctional = std::function<double(const Eigen::MatrixXd& raw, Eigen::MatrixXd& d_raw)>;

class Mlp {
 public:
  explicit Mlp(NetworkArch arch);

  const NetworkArch& arch() const { return arch_; }
  std::size_t num_params() const { return num_params_; }

  /// Raw outputs for every row of `inputs` (N x output_dim).
  Eigen::MatrixXd raw_outputs(const ParamVector& w, const Eigen::MatrixXd& inputs) const;

  /// Head-applied outputs (N x output_dim): mean, softmax rows, or sigmoid.
  Eigen::MatrixXd predict(const ParamVector& w, const Eigen::MatrixXd& inputs) const;

  /// Reverse-mode gradient of functional(raw_outputs(w, inputs)) w.r.t. w.
  /// Throws NumericError naming the layer if an activation is non-finite.
  double value_and_gradient(const ParamVector& w, const Eigen::MatrixXd& inputs,
                            const RawFunctional& functional, Eigen::VectorXd& grad) const;

 private:
  void check_params(const ParamVector& w) const;

  NetworkArch arch_;
  std::size_t num_params_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights
};

NetworkOutput forward(const Mlp& mlp, const ParamVector& w, std::span<const double> x);
NetworkOutput forward(const Mlp& mlp, const ParamVector& w, const Eigen::VectorXd& x);

/// Gradient of a scalar functional of one input's raw output.
Eigen::VectorXd grad_params(const Mlp& mlp, const ParamVector& w, const Eigen::VectorXd& x,
                            const std::function<double(const Eigen::VectorXd& raw,
                                                       Eigen::VectorXd& d_raw)>& functional);

/// Single-input raw output `out_index` and its parameter gradient, written
/// with scalar loops so it can run on dual numbers.
template <typename T>
T raw_output_gradient(const NetworkArch& arch, std::span<const T> w, std::span<const double> x,
                      int out_index, std::span<T> grad);

struct HessianVectorProduct {
  double value = 0.0;         // raw output
  Eigen::VectorXd gradient;   // d raw / d w
  Eigen::VectorXd hv;         // (d^2 raw / d w^2) v
};

/// Exact Hessian-vector product of a single-node raw output at input x.
HessianVectorProduct hessian_vector_product(const Mlp& mlp, const ParamVector& w,
                                            const Eigen::VectorXd& x, const Eigen::VectorXd& v);

struct LikelihoodOptions {
  double probability_floor = 1e-12;
};

/// Sum over rows of log p(y_i | x_i, w). Probabilities below the floor are
/// clamped; the number of clamped rows is added to `clamped` when non-null.
double log_likelihood(const Mlp& mlp, const ParamVector& w, const Dataset& data,
                      const LikelihoodOptions& options = {}, std::size_t* clamped = nullptr);

/// log_likelihood scaled by `scale`, with its parameter gradient.
double log_likelihood_and_gradient(const Mlp& mlp, const ParamVector& w, const Dataset& data,
                                   Eigen::VectorXd& grad, double scale = 1.0,
                                   const LikelihoodOptions& options = {},
                                   std::size_t* clamped = nullptr);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double sigmoid(double z);
double log_sigmoid(double z);

// --- template implementation -------------------------------------------------

template <typename T>
T raw_output_gradient(const NetworkArch& arch, std::span<const T> w, std::span<const double> x,
                      int out_index, std::span<T> grad) {
  using std::exp;
  const int n_layers = static_cast<int>(arch.hidden_layers.size()) + 1;
  std::vector<int> sizes;
  sizes.reserve(n_layers + 1);
  sizes.push_back(arch.input_dim);
  for (int h : arch.hidden_layers) sizes.push_back(h);
  sizes.push_back(arch.output_dim());

  std::vector<std::size_t> offsets(n_layers);
  std::size_t off = 0;
  for (int l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(sizes[l + 1]) * (sizes[l] + 1);
  }
  if (w.size() != off || grad.size() != off) throw ShapeError("raw_output_gradient: parameter length mismatch");
  if (static_cast<int>(x.size()) != arch.input_dim) throw ShapeError("raw_output_gradient: input length mismatch");

  // acts[l] are the inputs to layer l; pre[l] its pre-activations.
  std::vector<std::vector<T>> acts(n_layers + 1), pre(n_layers);
  acts[0].assign(x.begin(), x.end());
  for (int l = 0; l < n_layers; ++l) {
    const int n_in = sizes[l], n_out = sizes[l + 1];
    const T* W = w.data() + offsets[l];
    const T* b = W + static_cast<std::size_t>(n_out) * n_in;
    pre[l].assign(n_out, T(0.0));
    for (int o = 0; o < n_out; ++o) {
      T z = b[o];
      for (int i = 0; i < n_in; ++i) z += W[o * n_in + i] * acts[l][i];
      pre[l][o] = z;
    }
    if (l + 1 < n_layers) {
      acts[l + 1].resize(n_out);
      for (int o = 0; o < n_out; ++o) acts[l + 1][o] = exp(-(pre[l][o] * pre[l][o]));
    }
  }

  for (auto& g : grad) g = T(0.0);
  std::vector<T> delta(sizes[n_layers], T(0.0));
  delta[out_index] = T(1.0);
  for (int l = n_layers - 1; l >= 0; --l) {
    const int n_in = sizes[l], n_out = sizes[l + 1];
    const T* W = w.data() + offsets[l];
    T* gW = grad.data() + offsets[l];
    T* gb = gW + static_cast<std::size_t>(n_out) * n_in;
    for (int o = 0; o < n_out; ++o) {
      gb[o] = delta[o];
      for (int i = 0; i < n_in; ++i) gW[o * n_in + i] = delta[o] * acts[l][i];
    }
    if (l == 0) break;
    std::vector<T> prev(n_in, T(0.0));
    for (int i = 0; i < n_in; ++i) {
      T s(0.0);
      for (int o = 0; o < n_out; ++o) s += delta[o] * W[o * n_in + i];
      // d/dz exp(-z^2) = -2 z exp(-z^2)
      prev[i] = s * (T(-2.0) * pre[l - 1][i] * acts[l][i]);
    }
    delta = std::move(prev);
  }
  return pre[n_layers - 1][out_index];
}

}  // namespace ocbnn
