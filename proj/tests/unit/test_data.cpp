#include <doctest.h>

#include <cmath>
#include <string>

#include "ocbnn/data.hpp"

using namespace ocbnn;

namespace {

std::vector<FeatureSpec> abc_schema() {
  return parse_schema(R"(
[[columns]]
name = "a"
transform = "standardize"

[[columns]]
name = "b"
transform = "log_transform"

[[columns]]
name = "y"
role = "target"
)");
}

Table tiny_table(std::size_t n, int positives) {
  Table t = parse_csv("a,b,y\n1,0,1\n", abc_schema());
  t.values.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    t.values(r, 0) = static_cast<double>(i % 17) + 0.5 * static_cast<double>(i % 3);
    t.values(r, 1) = static_cast<double>(i % 5);
    t.values(r, 2) = static_cast<int>(i) < positives ? 1.0 : 0.0;
  }
  return t;
}

}  // namespace

TEST_CASE("gen_toy: fig4 labelling rule") {
  const Dataset d = gen_toy(ToyKind::fig4_fairness, 1);
  REQUIRE(d.inputs.cols() == 2);
  for (Eigen::Index i = 0; i < d.inputs.rows(); ++i) {
    const double x1 = d.inputs(i, 0), x2 = d.inputs(i, 1);
    const double expect = x1 == 1.0 ? (x2 >= 0.8) : (x2 >= 0.2);
    CHECK(d.targets[i] == expect);
  }
  // The rule at the quoted points.
  const auto label = [](double x1, double x2) { return x1 == 1.0 ? x2 >= 0.8 : x2 >= 0.2; };
  CHECK(label(1, 0.9));
  CHECK_FALSE(label(1, 0.5));
  CHECK(label(0, 0.5));
}

TEST_CASE("gen_toy: fig6 without noise follows the cosine") {
  ToyOptions o;
  o.noise_sd = 0.0;
  const Dataset d = gen_toy(ToyKind::fig6_cosine, 3, o);
  CHECK(d.size() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(d.targets[i] == doctest::Approx(5.0 * std::cos(d.inputs(i, 0) / 1.7)));
  CHECK(d.inputs(0, 0) == -5.0);
  CHECK(d.inputs(5, 0) == 5.0);
}

TEST_CASE("gen_toy: reproducible for every kind") {
  for (ToyKind k : {ToyKind::fig1_regression, ToyKind::fig2_threeclass, ToyKind::fig3a_xy, ToyKind::fig3b_gap,
                    ToyKind::fig4_fairness, ToyKind::fig6_cosine}) {
    const Dataset a = gen_toy(k, 42), b = gen_toy(k, 42);
    CHECK((a.inputs.array() == b.inputs.array()).all());
    CHECK((a.targets.array() == b.targets.array()).all());
    CHECK(a.inputs.cols() == toy_input_dim(k));
    CHECK(toy_from_string(to_string(k)) == k);
  }
  const Dataset f1 = gen_toy(ToyKind::fig1_regression, 1);
  CHECK((f1.inputs.array().abs() >= 1.0).all());
}

TEST_CASE("csv ingestion") {
  const auto schema = abc_schema();
  const Table t = parse_csv("a,b,y\n1.5,2,1\n-3,0,0\n7,1e2,1\n", schema);
  REQUIRE(t.rows() == 3);
  CHECK(t.dropped_rows == 0);
  CHECK(t.values(0, 0) == 1.5);
  CHECK(t.values(2, 1) == 100.0);
  CHECK(t.values(1, 2) == 0.0);

  const Table bad = parse_csv("y,a,b,extra\n1,1,2,x\n0,oops,2,x\n1,\"3\",4,x\n", schema);
  CHECK(bad.rows() == 2);
  CHECK(bad.dropped_rows == 1);
  CHECK(bad.values(1, 0) == 3.0);

  CHECK_THROWS_AS(parse_csv("a,y\n1,1\n", schema), SchemaError);
  try {
    parse_csv("a,y\n1,1\n", schema);
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
}

TEST_CASE("COMPAS table matches its schema") {
  const std::string dir = std::string(OCBNN_SOURCE_DIR) + "/data/compas/";
  const auto schema = load_schema(dir + "schema.toml");
  const Table t = load_csv(dir + "compas.csv", schema);
  CHECK(t.rows() == 6172);
  const Dataset d = to_dataset(t, schema);
  CHECK(d.inputs.cols() == 9);
  CHECK(t.names.back() == "compas_high_risk");
  CHECK(((d.targets.array() == 0.0) || (d.targets.array() == 1.0)).all());
}

TEST_CASE("preprocess: standardization uses train statistics") {
  const auto schema = abc_schema();
  const Table t = tiny_table(200, 60);
  PreprocessOptions o;
  o.train_fraction = 0.7;
  const auto s = preprocess(t, schema, o, 5);
  const Eigen::VectorXd a = s.train.inputs.col(0);
  CHECK(std::abs(a.mean()) < 1e-9);
  CHECK(std::abs(std::sqrt((a.array() - a.mean()).square().mean()) - 1.0) < 1e-6);
  const Eigen::VectorXd at = s.test.inputs.col(0);
  const double tm = at.mean(), tsd = std::sqrt((at.array() - tm).square().mean());
  CHECK_FALSE((std::abs(tm) < 1e-9 && std::abs(tsd - 1.0) < 1e-6));
  CHECK(s.train.size() + s.test.size() == 200);
  CHECK(s.train.size() == 140);

  FittedTransform lt;
  lt.transform = Transform::log_transform;
  CHECK(lt.apply(0.0) == 0.0);
  CHECK(lt.apply(std::exp(1.0) - 1.0) == doctest::Approx(1.0));
}

TEST_CASE("preprocess: reproducible split") {
  const auto schema = abc_schema();
  const Table t = tiny_table(100, 30);
  PreprocessOptions o;
  const auto a = preprocess(t, schema, o, 9), b = preprocess(t, schema, o, 9), c = preprocess(t, schema, o, 10);
  CHECK((a.train.inputs.array() == b.train.inputs.array()).all());
  CHECK((a.test.targets.array() == b.test.targets.array()).all());
  CHECK_FALSE((a.raw_test.values.array() == c.raw_test.values.array()).all());
}

TEST_CASE("preprocess: minority upsampling reaches parity") {
  const auto schema = abc_schema();
  const Table t = tiny_table(100, 10);
  PreprocessOptions o;
  o.train_fraction = 1.0;
  o.upsample_minority = true;
  const auto s = preprocess(t, schema, o, 1);
  const double pos = s.train.targets.sum();
  CHECK(pos == 90.0);
  CHECK(static_cast<double>(s.train.size()) - pos == 90.0);

  Eigen::VectorXd y(7);
  y << 1, 0, 0, 0, 0, 1, 0;
  const auto idx = upsample_indices(y, 3);
  double ones = 0;
  for (auto i : idx) ones += y[static_cast<Eigen::Index>(i)];
  CHECK(ones == 5.0);
  CHECK(idx.size() == 10);
}

TEST_CASE("preprocess: zero-variance column is floored") {
  const auto schema = abc_schema();
  Table t = tiny_table(20, 5);
  t.values.col(0).setConstant(3.0);
  PreprocessOptions o;
  o.train_fraction = 1.0;
  const auto s = preprocess(t, schema, o, 1);
  CHECK(s.record.features[0].sd_floored);
  CHECK(s.record.features[0].sd == 1e-8);
  CHECK(s.train.inputs.col(0).allFinite());
}

TEST_CASE("preprocess: train filter runs before fitting") {
  const auto schema = abc_schema();
  const Table t = tiny_table(100, 40);
  PreprocessOptions o;
  o.train_fraction = 1.0;
  o.keep_train_row = [](const Eigen::VectorXd& row) { return row[0] < 8.0; };
  const auto s = preprocess(t, schema, o, 1);
  CHECK((s.raw_train.values.col(0).array() < 8.0).all());
  CHECK(s.test.size() == 100);
  CHECK(std::abs(s.train.inputs.col(0).mean()) < 1e-9);
}

TEST_CASE("surrogate tables are reproducible and follow their schemas") {
  const Table a = gen_clinical_surrogate(300, 4), b = gen_clinical_surrogate(300, 4);
  CHECK((a.values.array() == b.values.array()).all());
  CHECK(a.names.size() == clinical_schema().size());
  CHECK(to_dataset(a, clinical_schema()).inputs.cols() == 8);
  const Table c = gen_credit_surrogate(300, 4), d = gen_credit_surrogate(300, 4);
  CHECK((c.values.array() == d.values.array()).all());
  CHECK(to_dataset(c, credit_schema()).inputs.cols() == 10);
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(parse_schema(R"(
[[columns]]
name = "a"
)"),
                  SchemaError);
  CHECK_THROWS_AS(parse_schema(R"(
[[columns]]
name = "a"
transform = "cube"

[[columns]]
name = "y"
role = "target"
)"),
                  Error);
}
