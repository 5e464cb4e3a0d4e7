#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "ocbnn/serialization.hpp"
#include "test_support.hpp"

using namespace ocbnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / ("ocbnn_ser_" + leaf);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

NetworkArch small(Task task) {
  NetworkArch a;
  a.input_dim = 2;
  a.hidden_layers = {3, 2};
  a.task = task;
  a.num_classes = task == Task::k_class ? 3 : 2;
  return a;
}

}  // namespace

TEST_CASE("parameter files round-trip bit-exactly") {
  const auto dir = scratch("params");
  const NetworkArch arch = small(Task::regression);
  Rng rng(1);
  const ParamVector w = test::random_vector(static_cast<Eigen::Index>(Mlp(arch).num_params()), rng);
  save_params((dir / "w.bin").string(), arch, w);
  const ParamVector back = load_params((dir / "w.bin").string(), arch);
  CHECK((back.array() == w.array()).all());
  fs::remove_all(dir);
}

TEST_CASE("variational parameters round-trip") {
  const auto dir = scratch("var");
  const NetworkArch arch = small(Task::binary_logit);
  const auto dim = static_cast<Eigen::Index>(Mlp(arch).num_params());
  Rng rng(2);
  const VariationalParams lambda{test::random_vector(dim, rng), test::random_vector(dim, rng, 0.2)};
  save_variational((dir / "q").string(), arch, lambda);
  CHECK(fs::exists(dir / "q.mu.bin"));
  CHECK(fs::exists(dir / "q.sigma.bin"));
  const auto back = load_variational((dir / "q").string(), arch);
  CHECK((back.mu.array() == lambda.mu.array()).all());
  CHECK((back.sigma() - lambda.sigma()).cwiseAbs().maxCoeff() < 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("posterior samples round-trip with header") {
  const auto dir = scratch("samples");
  const NetworkArch arch = small(Task::k_class);
  PosteriorSamples s;
  s.samples = Eigen::MatrixXd::Random(4, static_cast<Eigen::Index>(Mlp(arch).num_params()));
  s.method = "hmc";
  s.seed = 77;
  s.diagnostics.acceptance_rate = 0.8;
  save_samples((dir / "s.bin").string(), arch, s, R"({"config_hash":"00ff"})");
  const auto back = load_samples((dir / "s.bin").string(), arch);
  CHECK((back.samples.samples.array() == s.samples.array()).all());
  CHECK(back.samples.method == "hmc");
  CHECK(back.samples.seed == 77);
  CHECK(back.header_json.find("00ff") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("architecture mismatch is rejected") {
  const auto dir = scratch("mismatch");
  const NetworkArch arch = small(Task::regression);
  NetworkArch other = arch;
  other.hidden_layers = {3, 3};
  save_params((dir / "w.bin").string(), arch, ParamVector::Zero(static_cast<Eigen::Index>(Mlp(arch).num_params())));
  CHECK_THROWS_AS(load_params((dir / "w.bin").string(), other), SchemaError);
  CHECK(arch_fingerprint(arch) != arch_fingerprint(other));
  CHECK(arch_fingerprint(arch) != arch_fingerprint(small(Task::binary_logit)));

  { std::ofstream(dir / "junk.bin") << "not a parameter file"; }
  CHECK_THROWS(load_params((dir / "junk.bin").string(), arch));
  CHECK_THROWS(load_params((dir / "absent.bin").string(), arch));
  fs::remove_all(dir);
}
