#include <doctest.h>

#include <cmath>
#include <limits>

#include "ocbnn/network.hpp"
#include "test_support.hpp"

using namespace ocbnn;

namespace {

NetworkArch one_unit(Task task = Task::regression) {
  NetworkArch a;
  a.input_dim = 1;
  a.hidden_layers = {1};
  a.task = task;
  a.noise_sd = 0.1;
  return a;
}

}  // namespace

TEST_CASE("forward: zero parameters") {
  NetworkArch a;
  a.input_dim = 2;
  a.hidden_layers = {4, 3};
  Mlp reg(a);
  const Eigen::VectorXd x = Eigen::Vector2d(0.3, -1.2);
  CHECK(forward(reg, ParamVector::Zero(reg.num_params()), x).value[0] == 0.0);

  a.task = Task::k_class;
  a.num_classes = 3;
  Mlp cls(a);
  const auto out = forward(cls, ParamVector::Zero(cls.num_params()), x).value;
  REQUIRE(out.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(out[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("forward: hand-evaluated one-unit chain") {
  Mlp m(one_unit());
  // W0 = 0.5, b0 = -0.25, W1 = 2, b1 = 0.1: 2 exp(-(0.25)^2) + 0.1
  ParamVector w(4);
  w << 0.5, -0.25, 2.0, 0.1;
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(forward(m, w, x).value[0] == doctest::Approx(1.978826125626951572).epsilon(1e-14));
}

TEST_CASE("forward: binary head returns phi and its sigmoid") {
  Mlp m(one_unit(Task::binary_logit));
  ParamVector w(4);
  w << 0.5, -0.25, 2.0, 0.1;
  const auto out = forward(m, w, Eigen::VectorXd::Constant(1, 1.0));
  CHECK(out.raw[0] == doctest::Approx(1.978826125626951572).epsilon(1e-14));
  CHECK(out.value[0] == doctest::Approx(1.0 / (1.0 + std::exp(-out.raw[0]))));
  CHECK(out.value[0] > 0.0);
  CHECK(out.value[0] < 1.0);
}

TEST_CASE("forward: shape errors") {
  Mlp m(one_unit());
  CHECK_THROWS_AS(forward(m, ParamVector::Zero(3), Eigen::VectorXd::Zero(1)), ShapeError);
  CHECK_THROWS_AS(forward(m, ParamVector::Zero(4), Eigen::VectorXd::Zero(2)), ShapeError);
}

TEST_CASE("grad_params: constant functional gives zero") {
  Mlp m(one_unit());
  ParamVector w(4);
  w << 0.5, -0.25, 2.0, 0.1;
  const auto g = grad_params(m, w, Eigen::VectorXd::Constant(1, 1.0), [](const Eigen::VectorXd&, Eigen::VectorXd& d) {
    d.setZero();
    return 7.0;
  });
  CHECK(g.isZero(0.0));
}

TEST_CASE("grad_params: output itself matches finite differences") {
  Mlp m(one_unit());
  ParamVector w(4);
  w << 0.5, -0.25, 2.0, 0.1;
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  const auto g = grad_params(m, w, x, [](const Eigen::VectorXd& raw, Eigen::VectorXd& d) {
    d.setOnes();
    return raw[0];
  });
  const auto fd = test::finite_difference([&](const Eigen::VectorXd& v) { return forward(m, v, x).raw[0]; }, w);
  CHECK(test::relative_error(g, fd) < 1e-5);
}

TEST_CASE("grad_params: squared output follows the chain rule") {
  Mlp m(one_unit());
  ParamVector w(4);
  w << -0.7, 0.4, 1.3, -0.2;
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.6);
  const double out = forward(m, w, x).raw[0];
  const auto g1 = grad_params(m, w, x, [](const Eigen::VectorXd& raw, Eigen::VectorXd& d) {
    d.setOnes();
    return raw[0];
  });
  const auto g2 = grad_params(m, w, x, [](const Eigen::VectorXd& raw, Eigen::VectorXd& d) {
    d = 2.0 * raw;
    return raw[0] * raw[0];
  });
  CHECK(test::relative_error(g2, 2.0 * out * g1) < 1e-14);
}

TEST_CASE("grad_params: random probes across heads") {
  Rng rng(101);
  int probes = 0;
  for (Task task : {Task::regression, Task::binary_logit, Task::k_class}) {
    for (int i = 0; i < 40; ++i, ++probes) {
      Mlp m(test::random_arch(task, rng));
      const ParamVector w = test::random_vector(static_cast<Eigen::Index>(m.num_params()), rng, 0.8);
      const Eigen::VectorXd x = test::random_vector(m.arch().input_dim, rng);
      const Eigen::VectorXd c = test::random_vector(m.arch().output_dim(), rng);
      const auto f = [&](const Eigen::VectorXd& raw, Eigen::VectorXd& d) {
        d = c;
        return c.dot(raw);
      };
      const auto g = grad_params(m, w, x, f);
      const auto fd = test::finite_difference(
          [&](const Eigen::VectorXd& v) { return c.dot(forward(m, v, x).raw); }, w);
      CHECK(test::relative_error(g, fd) < 1e-4);
    }
  }
  CHECK(probes == 120);
}

TEST_CASE("value_and_gradient matches the per-input gradient sum") {
  Rng rng(7);
  NetworkArch a;
  a.input_dim = 2;
  a.hidden_layers = {5, 4};
  Mlp m(a);
  const ParamVector w = test::random_vector(static_cast<Eigen::Index>(m.num_params()), rng);
  Eigen::MatrixXd xs(3, 2);
  xs << 0.1, 0.2, -1.0, 0.5, 2.0, -0.3;
  Eigen::VectorXd g;
  const double v = m.value_and_gradient(w, xs, [](const Eigen::MatrixXd& raw, Eigen::MatrixXd& d) {
    d = Eigen::MatrixXd::Ones(raw.rows(), raw.cols());
    return raw.sum();
  }, g);
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(g.size());
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd x = xs.row(i).transpose();
    total += forward(m, w, x).raw[0];
    expect += grad_params(m, w, x, [](const Eigen::VectorXd& raw, Eigen::VectorXd& d) {
      d.setOnes();
      return raw[0];
    });
  }
  CHECK(v == doctest::Approx(total));
  CHECK(test::relative_error(g, expect) < 1e-12);
}

TEST_CASE("value_and_gradient reports non-finite activations") {
  Mlp m(one_unit());
  ParamVector w(4);
  w << std::numeric_limits<double>::infinity(), 0.0, 1.0, 0.0;
  Eigen::VectorXd g;
  CHECK_THROWS_AS(m.value_and_gradient(w, Eigen::MatrixXd::Constant(1, 1, 0.0),
                                       [](const Eigen::MatrixXd& raw, Eigen::MatrixXd& d) {
                                         d = Eigen::MatrixXd::Ones(raw.rows(), raw.cols());
                                         return raw.sum();
                                       },
                                       g),
                  NumericError);
}

TEST_CASE("k_class outputs are probability vectors") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Mlp m(test::random_arch(Task::k_class, rng));
    const ParamVector w = test::random_vector(static_cast<Eigen::Index>(m.num_params()), rng, 3.0);
    const auto p = forward(m, w, test::random_vector(m.arch().input_dim, rng)).value;
    CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    CHECK((p.array() >= 0.0).all());
  }
}

TEST_CASE("forward and log_likelihood are deterministic") {
  Rng rng(5);
  NetworkArch a;
  a.input_dim = 2;
  a.hidden_layers = {6};
  Mlp m(a);
  const ParamVector w = test::random_vector(static_cast<Eigen::Index>(m.num_params()), rng);
  Dataset d{Eigen::MatrixXd::Random(20, 2), Eigen::VectorXd::Random(20)};
  const auto p1 = m.predict(w, d.inputs), p2 = m.predict(w, d.inputs);
  CHECK((p1.array() == p2.array()).all());
  CHECK(log_likelihood(m, w, d) == log_likelihood(m, w, d));
}

TEST_CASE("flatten and unflatten round-trip") {
  Rng rng(9);
  NetworkArch a;
  a.input_dim = 3;
  a.hidden_layers = {4, 2};
  a.task = Task::k_class;
  a.num_classes = 3;
  const ParamVector w = test::random_vector(static_cast<Eigen::Index>(a.num_params()), rng);
  const auto layers = unflatten(a, w);
  REQUIRE(layers.size() == 3);
  CHECK(layers[0].weights.rows() == 4);
  CHECK(layers[0].weights.cols() == 3);
  CHECK(layers[1].weights.rows() == 2);
  CHECK(layers[2].weights.rows() == 3);
  CHECK(layers[2].bias.size() == 3);
  CHECK((flatten(a, layers).array() == w.array()).all());
  const auto again = unflatten(a, flatten(a, layers));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    CHECK(again[l].weights.rows() == layers[l].weights.rows());
    CHECK(again[l].weights.cols() == layers[l].weights.cols());
  }
}

TEST_CASE("log_likelihood: documented cases") {
  SUBCASE("regression at the mean") {
    Mlp m(one_unit());
    ParamVector w(4);
    w << 0.5, -0.25, 2.0, 0.1;
    Dataset d{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 1.978826125626951572)};
    // -log(0.1 sqrt(2 pi))
    CHECK(log_likelihood(m, w, d) == doctest::Approx(1.383646559789372942).epsilon(1e-12));
  }
  SUBCASE("classification with probability one on the true class") {
    NetworkArch a = one_unit(Task::k_class);
    a.num_classes = 3;
    Mlp m(a);
    ParamVector w = ParamVector::Zero(static_cast<Eigen::Index>(m.num_params()));
    w[w.size() - 3] = 800.0;  // bias of class 0
    Dataset d{Eigen::MatrixXd::Constant(2, 1, 0.3), Eigen::VectorXd::Zero(2)};
    CHECK(log_likelihood(m, w, d) == 0.0);
  }
  SUBCASE("empty dataset") {
    Mlp m(one_unit());
    Dataset d{Eigen::MatrixXd(0, 1), Eigen::VectorXd(0)};
    CHECK(log_likelihood(m, ParamVector::Ones(4), d) == 0.0);
  }
  SUBCASE("floor clamps impossible labels") {
    NetworkArch a = one_unit(Task::k_class);
    a.num_classes = 2;
    Mlp m(a);
    ParamVector w = ParamVector::Zero(static_cast<Eigen::Index>(m.num_params()));
    w[w.size() - 2] = 800.0;
    Dataset d{Eigen::MatrixXd::Constant(1, 1, 0.0), Eigen::VectorXd::Ones(1)};
    std::size_t clamped = 0;
    const double ll = log_likelihood(m, w, d, {}, &clamped);
    CHECK(std::isfinite(ll));
    CHECK(ll == doctest::Approx(std::log(1e-12)));
    CHECK(clamped == 1);
  }
}

TEST_CASE("log_likelihood gradient matches finite differences") {
  Rng rng(13);
  for (Task task : {Task::regression, Task::binary_logit, Task::k_class}) {
    NetworkArch a = test::random_arch(task, rng);
    Mlp m(a);
    const ParamVector w = test::random_vector(static_cast<Eigen::Index>(m.num_params()), rng, 0.7);
    Dataset d;
    d.inputs = Eigen::MatrixXd::Random(8, a.input_dim);
    d.targets.resize(8);
    for (int i = 0; i < 8; ++i)
      d.targets[i] = task == Task::regression ? 0.3 * i - 1.0 : i % (task == Task::k_class ? 3 : 2);
    Eigen::VectorXd g;
    log_likelihood_and_gradient(m, w, d, g, 1.0);
    const auto fd = test::finite_difference([&](const Eigen::VectorXd& v) { return log_likelihood(m, v, d); }, w);
    CHECK(test::relative_error(g, fd) < 1e-5);
  }
}

TEST_CASE("hessian_vector_product matches differences of gradients") {
  Rng rng(17);
  NetworkArch a;
  a.input_dim = 2;
  a.hidden_layers = {4, 3};
  Mlp m(a);
  const ParamVector w = test::random_vector(static_cast<Eigen::Index>(m.num_params()), rng, 0.7);
  const Eigen::VectorXd v = test::random_vector(w.size(), rng);
  const Eigen::VectorXd x = Eigen::Vector2d(0.4, -0.9);
  const auto grad_at = [&](const ParamVector& p) {
    return grad_params(m, p, x, [](const Eigen::VectorXd& raw, Eigen::VectorXd& d) {
      d.setOnes();
      return raw[0];
    });
  };
  const auto r = hessian_vector_product(m, w, x, v);
  const double h = 1e-5;
  const Eigen::VectorXd fd = (grad_at(w + h * v) - grad_at(w - h * v)) / (2.0 * h);
  CHECK(test::relative_error(r.hv, fd) < 1e-5);
  CHECK(test::relative_error(r.gradient, grad_at(w)) < 1e-12);
}
