#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "ocbnn/expression.hpp"

using namespace ocbnn;

TEST_CASE("expression: arithmetic and precedence") {
  const std::vector<double> x{2.0, -1.0};
  CHECK(Expression::parse("1 + 2 * 3")(x) == 7.0);
  CHECK(Expression::parse("(1 + 2) * 3")(x) == 9.0);
  CHECK(Expression::parse("-2 ^ 2")(x) == -4.0);
  CHECK(Expression::parse("2 ^ 3 ^ 2")(x) == 512.0);
  CHECK(Expression::parse("x1 * x2 - y")(x, 0.5) == -2.5);
  CHECK(Expression::parse("10 / 4")(x) == 2.5);
}

TEST_CASE("expression: functions and constants") {
  const std::vector<double> x{0.5};
  CHECK(Expression::parse("5 * cos(x1 / 1.7)")(x) == doctest::Approx(5.0 * std::cos(0.5 / 1.7)));
  CHECK(Expression::parse("min(x1, 0.2)")(x) == 0.2);
  CHECK(Expression::parse("max(x1, 0.2)")(x) == 0.5);
  CHECK(Expression::parse("abs(-3) + sqrt(16) + log(exp(1))")(x) == doctest::Approx(8.0));
  CHECK(Expression::parse("pi")(x) == doctest::Approx(M_PI));
  CHECK(std::isinf(Expression::parse("-inf")(x)));
}

TEST_CASE("expression: aliases and metadata") {
  const Expression e = Expression::parse("age - 34.5", {{"age", 1}});
  const std::vector<double> x{0.0, 40.0};
  CHECK(e(x) == 5.5);
  CHECK(e.max_input_index() == 1);
  CHECK_FALSE(e.depends_on_y());
  CHECK(Expression::parse("-x1 * y").depends_on_y());
  CHECK(Expression::parse("3").is_constant());
  CHECK(Expression::constant(2.5)(x) == 2.5);
}

TEST_CASE("expression: derivative in y") {
  const std::vector<double> x{2.0};
  const Dual d = Expression::parse("x1 * y ^ 2 + sin(y)").eval_dual(x, 0.3);
  CHECK(d.v == doctest::Approx(2.0 * 0.09 + std::sin(0.3)));
  CHECK(d.d == doctest::Approx(2.0 * 2.0 * 0.3 + std::cos(0.3)));
}

TEST_CASE("expression: errors") {
  CHECK_THROWS_AS(Expression::parse("1 +"), ConfigError);
  CHECK_THROWS_AS(Expression::parse("foo(1)"), ConfigError);
  CHECK_THROWS_AS(Expression::parse("unknown_name"), ConfigError);
  CHECK_THROWS_AS(Expression::parse("(1"), ConfigError);
  const std::vector<double> x{1.0};
  CHECK_THROWS_AS(Expression::parse("x3")(x), ShapeError);
}
