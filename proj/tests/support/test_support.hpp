#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "ocbnn/constraints.hpp"
#include "ocbnn/network.hpp"

namespace ocbnn::test {

/// Central differences of f at x with step h.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

inline Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

/// Small random architecture for the given task.
inline NetworkArch random_arch(Task task, Rng& rng) {
  std::uniform_int_distribution<int> dim(1, 3), width(1, 5), depth(1, 2);
  NetworkArch a;
  a.input_dim = dim(rng);
  a.hidden_layers.clear();
  const int d = depth(rng);
  for (int i = 0; i < d; ++i) a.hidden_layers.push_back(width(rng));
  a.task = task;
  a.num_classes = 3;
  a.noise_sd = 0.5;
  return a;
}

/// First constraint parsed from a single [[constraints]] TOML block.
inline Constraint constraint_from_toml(const std::string& text, int input_dim) {
  return parse_constraints(text, input_dim).at(0);
}

}  // namespace ocbnn::test
