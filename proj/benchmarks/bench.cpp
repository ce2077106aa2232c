#include <benchmark/benchmark.h>

#include <cmath>

#include "hitchin/cli.hpp"

using namespace hitchin;

namespace {

lattice::Domain torus(int N) { return lattice::Domain::torus(1, {N, N}, {2 * M_PI, 2 * M_PI}); }

higgs::EndoFormField companion(const lattice::Domain& dom) {
  higgs::EndoFormField phi(dom, 2, 1, 0);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    phi.at(s, 0)(0, 1) = 1.0;
    phi.at(s, 0)(1, 0) = 1.0 + 0.3 * std::sin(dom.coord(s, 0));
  }
  return phi;
}

void BM_Dbar(benchmark::State& state) {
  auto dom = torus(static_cast<int>(state.range(0)));
  lattice::FormField f(dom, 1, 0);
  for (std::size_t s = 0; s < dom.sites(); ++s) f(s, 0) = std::sin(dom.coord(s, 0)) * std::cos(2 * dom.coord(s, 1));
  for (auto _ : state) benchmark::DoNotOptimize(lattice::dbar(f));
  state.SetItemsProcessed(state.iterations() * dom.sites());
}
BENCHMARK(BM_Dbar)->Arg(64)->Arg(128)->Arg(256);

void BM_HsResidual(benchmark::State& state) {
  auto dom = torus(static_cast<int>(state.range(0)));
  auto phi = companion(dom);
  auto H = cli::perturbed_metric(dom, 2, 0.3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(solver::hs_residual(H, phi));
  state.SetItemsProcessed(state.iterations() * dom.sites());
}
BENCHMARK(BM_HsResidual)->Arg(32)->Arg(64);

// One outer step of the metric flow from a perturbed start.
void BM_SolverStep(benchmark::State& state) {
  auto dom = torus(static_cast<int>(state.range(0)));
  auto phi = companion(dom);
  auto H0 = cli::perturbed_metric(dom, 2, 0.3, 2);
  solver::SolveParams p;
  p.max_iter = 1;
  p.tol = 1e-300;
  for (auto _ : state) benchmark::DoNotOptimize(solver::solve_metric(phi, H0, p));
}
BENCHMARK(BM_SolverStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_LemmaSamples(benchmark::State& state) {
  const int rank = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(higgs::run_lemma_suite(rank, 1000, 3));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_LemmaSamples)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
