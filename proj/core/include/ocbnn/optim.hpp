#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "ocbnn/error.hpp"

namespace ocbnn {

/// Per-coordinate AdaGrad: acc += g^2, step = lr * g / (sqrt(acc) + eps).
class AdaGrad {
 public:
  AdaGrad(Eigen::Index dim, double lr, double eps = 1e-8)
      : acc_(Eigen::VectorXd::Zero(dim)), lr_(lr), eps_(eps) {
    if (!(lr > 0.0)) throw ConfigError("AdaGrad learning rate must be positive");
  }

  /// Moves `x` along +g (ascent). Pass -g to descend.
  void ascend(Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& g) {
    if (g.size() != acc_.size() || x.size() != acc_.size()) throw ShapeError("AdaGrad: length mismatch");
    acc_.array() += g.array().square();
    x.array() += lr_ * g.array() / (acc_.array().sqrt() + eps_);
  }

  const Eigen::VectorXd& accumulator() const { return acc_; }
  double learning_rate() const { return lr_; }

 private:
  Eigen::VectorXd acc_;
  double lr_;
  double eps_;
};

}  // namespace ocbnn
