#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "ocbnn/inference.hpp"
#include "ocbnn/priors.hpp"

using namespace ocbnn;

namespace {

NetworkArch arch(int width) {
  NetworkArch a;
  a.input_dim = 1;
  a.hidden_layers = {width};
  a.noise_sd = 0.1;
  return a;
}

ParamVector random_params(const Mlp& m, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  ParamVector w(static_cast<Eigen::Index>(m.num_params()));
  for (auto& v : w) v = nd(rng);
  return w;
}

Dataset toy_data(int n) {
  Dataset d;
  d.inputs = Eigen::VectorXd::LinSpaced(n, -2.0, 2.0);
  d.targets = (0.5 * d.inputs.col(0).array() + 1.0).matrix();
  return d;
}

Constraint gap_constraint() {
  return parse_constraints(R"(
[[constraints]]
id = "gap"
polarity = "negative"
region = { kind = "box", lower = [-0.3], upper = [0.3] }
rule = { kind = "intervals", intervals = [[-inf, 2.5], [3.0, inf]] }
)",
                           1)
      .at(0);
}

void BM_Forward(benchmark::State& state) {
  const Mlp m(arch(static_cast<int>(state.range(0))));
  const ParamVector w = random_params(m, 1);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, w, x).value);
}
BENCHMARK(BM_Forward)->Arg(10)->Arg(100);

void BM_LikelihoodGradient(benchmark::State& state) {
  const Mlp m(arch(static_cast<int>(state.range(0))));
  const ParamVector w = random_params(m, 2);
  const Dataset d = toy_data(100);
  Eigen::VectorXd g;
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood_and_gradient(m, w, d, g));
}
BENCHMARK(BM_LikelihoodGradient)->Arg(10)->Arg(100);

void BM_HessianVector(benchmark::State& state) {
  const Mlp m(arch(static_cast<int>(state.range(0))));
  const ParamVector w = random_params(m, 3), v = random_params(m, 4);
  const Dataset d = toy_data(1);
  for (auto _ : state) benchmark::DoNotOptimize(hessian_vector_product(m, w, d.inputs.row(0).transpose(), v).hv);
}
BENCHMARK(BM_HessianVector)->Arg(10)->Arg(100);

void BM_CocpLogDensity(benchmark::State& state) {
  const Mlp m(arch(10));
  const ParamVector w = random_params(m, 5);
  const Constraint c = gap_constraint();
  const std::vector<CocpTerm> terms{
      CocpTerm{c, NegExpFamily{10000.0, 15.0, 2.0}, sample_region(c.region, static_cast<std::size_t>(state.range(0)), 6)}};
  Eigen::VectorXd g;
  for (auto _ : state) benchmark::DoNotOptimize(log_cocp(m, w, 1.0, terms, &g));
}
BENCHMARK(BM_CocpLogDensity)->Arg(50)->Arg(500);

std::shared_ptr<LogPosterior> fig1_posterior() {
  const Mlp m(arch(10));
  const Constraint c = gap_constraint();
  auto prior = std::make_shared<CocpPrior>(
      m, 1.0, std::vector<CocpTerm>{CocpTerm{c, NegExpFamily{10000.0, 15.0, 2.0}, sample_region(c.region, 50, 7)}});
  return std::make_shared<LogPosterior>(prior, std::make_shared<DataLikelihood>(m, toy_data(10)));
}

void BM_HmcTransition(benchmark::State& state) {
  const auto post = fig1_posterior();
  HmcOptions opt;
  opt.burn_in = 0;
  opt.n_collect = 1;
  opt.thin = 1;
  opt.leapfrog_steps = 50;
  opt.step_size = 0.005;
  Rng rng(8);
  const ParamVector init = ParamVector::Zero(static_cast<Eigen::Index>(post->dim()));
  for (auto _ : state) benchmark::DoNotOptimize(hmc(*post, init, opt, rng).samples);
}
BENCHMARK(BM_HmcTransition);

void BM_SvgdIteration(benchmark::State& state) {
  const auto post = fig1_posterior();
  SvgdOptions opt;
  opt.particles = static_cast<std::size_t>(state.range(0));
  opt.iterations = 1;
  Rng rng(9);
  for (auto _ : state) benchmark::DoNotOptimize(svgd(*post, opt, rng).samples);
}
BENCHMARK(BM_SvgdIteration)->Arg(20)->Arg(50);

}  // namespace
BENCHMARK_MAIN();
