#include <benchmark/benchmark.h>

#include <random>

#include "egmu/model.hpp"
#include "egmu/newton.hpp"
#include "egmu/numerics.hpp"
#include "egmu/projection.hpp"
#include "egmu/proxgrad.hpp"

namespace {

using egmu::Instance;
using egmu::MatrixXd;
using egmu::VectorXd;

Instance make_instance(Eigen::Index n, Eigen::Index k, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Instance inst;
  inst.benchmark = VectorXd::NullaryExpr(n, [&](Eigen::Index) {
    return unif(rng);
  });
  inst.benchmark /= inst.benchmark.sum();
  inst.exposures = MatrixXd::NullaryExpr(n, k, [&](Eigen::Index, Eigen::Index) {
    return gauss(rng);
  });
  return inst;
}

// Interior target: exposures of a random mean-preserving reweighting.
VectorXd make_target(const Instance& inst, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  VectorXd w = inst.benchmark;
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] *= unif(rng);
  w /= w.sum();
  return inst.exposures.transpose() * w;
}

void BM_Tilt(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Instance inst = make_instance(n, 10, 7);
  const VectorXd theta = VectorXd::Constant(10, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(egmu::tilt(inst, theta));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Tilt)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_NewtonSolve(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Instance inst = make_instance(n, 10, 11);
  const VectorXd t = make_target(inst, 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(egmu::solve_equality(inst, t));
  }
}
BENCHMARK(BM_NewtonSolve)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_ElasticSolve(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Instance inst = make_instance(n, 10, 17);
  const VectorXd t = make_target(inst, 19);
  for (auto _ : state) {
    benchmark::DoNotOptimize(egmu::solve_elastic(inst, t, 10.0));
  }
}
BENCHMARK(BM_ElasticSolve)->Arg(1000)->Arg(10000);

void BM_HyperplaneProjection(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Instance inst = make_instance(n, 1, 23);
  const VectorXd a = inst.exposures.col(0);
  const double tau = 0.3 * a.cwiseProduct(inst.benchmark).sum();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        egmu::project_hyperplane(inst.benchmark, a, tau));
  }
}
BENCHMARK(BM_HyperplaneProjection)->Arg(1000)->Arg(100000);

void BM_Ipf(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Instance inst = make_instance(n, 4, 29);
  const VectorXd t = make_target(inst, 31);
  const auto rows = egmu::factor_constraints(inst, t);
  for (auto _ : state) {
    benchmark::DoNotOptimize(egmu::solve_ipf(inst, rows));
  }
}
BENCHMARK(BM_Ipf)->Arg(1000)->Arg(10000);

void BM_RobustL2(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Instance inst = make_instance(n, 5, 37);
  VectorXd t0 = make_target(inst, 41);
  t0.array() += 0.2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        egmu::solve_robust(inst, t0, {egmu::RobustKind::L2Ball, 0.1}));
  }
}
BENCHMARK(BM_RobustL2)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
