#include <doctest.h>

#include <cmath>
#include <limits>

#include "ocbnn/constraints.hpp"
#include "test_support.hpp"

using namespace ocbnn;

namespace {

const char* kFig1 = R"(
[[constraints]]
id = "gap"
polarity = "negative"
region = { kind = "box", lower = [-0.3], upper = [0.3] }
rule = { kind = "intervals", intervals = [[-inf, 2.5], [3.0, inf]] }
)";

const char* kGreen = R"(
[[constraints]]
id = "green"
region = { kind = "box", lower = [1.0, -2.0], upper = [3.0, 0.0] }
rule = { kind = "values", values = [2] }
)";

const char* kSign = R"(
[[constraints]]
id = "sign"
region = { kind = "box", lower = [-3.0], upper = [3.0] }
rule = { kind = "inequalities", inequalities = ["-x1 * y"] }
)";

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

}  // namespace

TEST_CASE("satisfies: negative interval union") {
  const Constraint c = test::constraint_from_toml(kFig1, 1);
  CHECK(satisfies(c, v1(0.0), 2.7));
  CHECK_FALSE(satisfies(c, v1(0.0), 2.0));
  CHECK_FALSE(satisfies(c, v1(0.0), 3.0));
  CHECK_FALSE(satisfies(c, v1(0.0), 2.5));
}

TEST_CASE("satisfies: positive value set") {
  const Constraint c = test::constraint_from_toml(kGreen, 2);
  const Eigen::VectorXd x = Eigen::Vector2d(2.0, -1.0);
  CHECK(satisfies(c, x, 2.0));
  CHECK_FALSE(satisfies(c, x, 0.0));
  CHECK(permitted_classes(c, x, 3) == std::vector<int>{2});
  CHECK(permitted_classes(flip_polarity(c), x, 3) == std::vector<int>{0, 1});
}

TEST_CASE("satisfies: affine inequality") {
  const Constraint c = test::constraint_from_toml(kSign, 1);
  CHECK(satisfies(c, v1(1.0), 0.5));
  CHECK(satisfies(c, v1(1.0), 0.0));
  CHECK_FALSE(satisfies(c, v1(1.0), -0.5));
  CHECK(satisfies(c, v1(-1.0), -0.5));
  const auto iv = permitted_intervals(c, v1(-2.0));
  REQUIRE(iv.size() == 1);
  CHECK(std::isinf(iv[0].lower));
  CHECK(iv[0].upper == 0.0);
}

TEST_CASE("satisfies: probabilistic constraints are rejected") {
  const Constraint c = test::constraint_from_toml(R"(
[[constraints]]
id = "fair"
polarity = "probabilistic"
region = { kind = "box", lower = [0.0, 0.0], upper = [1.0, 1.0] }
distribution = { kind = "bernoulli", p = "x2" }
)",
                                                  2);
  CHECK_THROWS_AS(satisfies(c, Eigen::Vector2d(0.5, 0.5), 1.0), ContractError);
  CHECK_THROWS_AS(flip_polarity(c), ContractError);
}

TEST_CASE("polarity duality") {
  Rng rng(21);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (const char* text : {kFig1, kSign}) {
    const Constraint c = test::constraint_from_toml(text, 1);
    const Constraint f = flip_polarity(c);
    for (int i = 0; i < 2000; ++i) {
      const Eigen::VectorXd x = v1(u(rng) * 0.06);
      const double y = u(rng);
      CHECK((satisfies(c, x, y) != satisfies(f, x, y)));
    }
  }
  const Constraint g = test::constraint_from_toml(kGreen, 2);
  for (int k = 0; k < 3; ++k) CHECK((satisfies(g, Eigen::Vector2d(2, -1), k) != satisfies(flip_polarity(g), Eigen::Vector2d(2, -1), k)));
}

TEST_CASE("interval helpers") {
  const auto comp = complement({{-1.0, 1.0}, {2.0, 3.0}});
  REQUIRE(comp.size() == 3);
  CHECK(std::isinf(comp[0].lower));
  CHECK(comp[0].upper == -1.0);
  CHECK(comp[1].lower == 1.0);
  CHECK(comp[1].upper == 2.0);
  CHECK(comp[2].lower == 3.0);
  CHECK(std::isinf(comp[2].upper));
}

TEST_CASE("constraint validation") {
  CHECK_THROWS_AS(test::constraint_from_toml(R"(
[[constraints]]
region = { kind = "box", lower = [0.0], upper = [1.0] }
rule = { kind = "intervals", intervals = [[2.0, 3.0], [1.0, 1.5]] }
)",
                                             1),
                  ConfigError);
  CHECK_THROWS_AS(test::constraint_from_toml(R"(
[[constraints]]
region = { kind = "box", lower = [1.0], upper = [0.0] }
rule = { kind = "values", values = [1] }
)",
                                             1),
                  ConfigError);
  CHECK_THROWS_AS(test::constraint_from_toml(R"(
[[constraints]]
region = { kind = "box", lower = [0.0], upper = [1.0] }
)",
                                             1),
                  ConfigError);
}

TEST_CASE("non-affine inequalities cannot be turned into intervals") {
  const Constraint c = test::constraint_from_toml(R"(
[[constraints]]
region = { kind = "box", lower = [0.0], upper = [1.0] }
rule = { kind = "inequalities", inequalities = ["y * y - 1"] }
)",
                                                  1);
  CHECK_THROWS_AS(permitted_intervals(c, v1(0.5)), ContractError);
}

TEST_CASE("sample_region: degenerate box") {
  Box b{v1(0.7), v1(0.7)};
  const auto s = sample_region(b, 5, 42);
  REQUIRE(s.size() == 5);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(s.points(i, 0) == 0.7);
}

TEST_CASE("sample_region: unit square support") {
  Box b{Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)};
  const auto s = sample_region(b, 1000, 7);
  CHECK(s.size() == 1000);
  CHECK((s.points.array() >= 0.0).all());
  CHECK((s.points.array() <= 1.0).all());
}

TEST_CASE("sample_region: predicate region") {
  PredicateRegion p{"same_sign", named_predicate("same_sign"), Box{Eigen::Vector2d(-2, -2), Eigen::Vector2d(2, 2)}};
  const auto s = sample_region(p, 500, 11);
  for (Eigen::Index i = 0; i < s.points.rows(); ++i) CHECK(s.points(i, 0) * s.points(i, 1) >= 0.0);

  PredicateRegion never{"never", [](const Eigen::VectorXd&) { return false; }, Box{v1(0.0), v1(1.0)}};
  CHECK_THROWS_AS(sample_region(never, 3, 1, SamplingLimits{10000, 1e-4}), SamplingError);
}

TEST_CASE("sample_region: whole space") {
  WholeSpace w;
  w.dim = 2;
  w.sampling_box = Box{Eigen::Vector2d(-1, 5), Eigen::Vector2d(1, 6)};
  const auto s = sample_region(w, 200, 3);
  CHECK((s.points.col(0).array().abs() <= 1.0).all());
  CHECK((s.points.col(1).array() >= 5.0).all());

  WholeSpace walk;
  walk.dim = 1;
  walk.walk_step_sd = 0.5;
  const auto a = sample_region(walk, 100, 8), b = sample_region(walk, 100, 8);
  CHECK((a.points.array() == b.points.array()).all());
  CHECK(a.points.allFinite());
}

TEST_CASE("sample_region is reproducible by seed") {
  Box b{Eigen::Vector2d(-3, 0), Eigen::Vector2d(3, 1)};
  const auto a = sample_region(b, 50, 99), c = sample_region(b, 50, 99), d = sample_region(b, 50, 100);
  CHECK((a.points.array() == c.points.array()).all());
  CHECK_FALSE((a.points.array() == d.points.array()).all());
  CHECK_THROWS_AS(sample_region(b, 0, 1), ContractError);
}

TEST_CASE("constraint files accept column aliases") {
  const auto cs = parse_constraints(R"(
[[constraints]]
id = "young"
region = { kind = "predicate", lower = [0.0, 0.0], upper = [100.0, 1.0], inequalities = ["age - 35"] }
rule = { kind = "values", values = [0] }
)",
                                    2, {{"age", 0}, {"ruul", 1}});
  REQUIRE(cs.size() == 1);
  CHECK(region_contains(cs[0].region, Eigen::Vector2d(30, 0.5)));
  CHECK_FALSE(region_contains(cs[0].region, Eigen::Vector2d(40, 0.5)));
}
