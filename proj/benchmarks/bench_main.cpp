#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "gandyn/autodiff.hpp"
#include "gandyn/dirac.hpp"
#include "gandyn/kernels.hpp"
#include "gandyn/linalg.hpp"
#include "gandyn/losses.hpp"
#include "gandyn/models.hpp"
#include "gandyn/rng.hpp"

namespace {

using namespace gandyn;

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = normal(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  Tensor out;
  for (auto _ : state) {
    kernels::matmul(a, b, out);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_GroupedConv3x3(benchmark::State& state) {
  Rng rng(2);
  const Tensor x = random_tensor({16, 32, 8, 8}, rng), w = random_tensor({32, 8, 3, 3}, rng);
  Tensor out;
  for (auto _ : state) {
    kernels::conv2d(x, w, {4, 1}, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_GroupedConv3x3);

// One critic update of the toy recipe: RpGAN + R1 + R2 loss and its parameter
// gradient (double backprop through the penalties), batch 128.
void BM_CriticStep(benchmark::State& state) {
  MlpSpec gs;
  gs.input_dim = 8;
  gs.output_dim = 2;
  MlpSpec ds;
  ds.input_dim = 2;
  ds.output_dim = 1;
  ds.scalar_output = true;
  const Model g = build_mlp(gs, 1), d = build_mlp(ds, 2);
  Rng rng(3);
  const Batch batch{random_tensor({128, 2}, rng), random_tensor({128, 8}, rng)};
  const ObjectiveSpec spec{ObjectiveKind::kRpGan, 1.0, 1.0, 1, Pairing::kIndex};
  const PlayerLosses pl = player_losses(spec, *g.net, *d.net, batch, 0);

  std::vector<std::string> wrt;
  for (const auto& p : d.net->parameters()) wrt.push_back("D." + p.name);
  const GradientGraph gg = gradient(pl.graph, pl.loss_d, wrt);
  std::vector<NodeId> outputs{pl.loss_d};
  for (const auto& [name, id] : gg.grads) outputs.push_back(id);
  Evaluator ev(gg.graph, outputs);
  ev.bind_known(loss_bindings(batch, g.params, d.params));
  for (auto _ : state) {
    ev.run();
    benchmark::DoNotOptimize(ev.value(pl.loss_d).item());
  }
}
BENCHMARK(BM_CriticStep)->Unit(benchmark::kMicrosecond);

void BM_Eigenvalues(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(eigenvalues(m));
}
BENCHMARK(BM_Eigenvalues)->Arg(2)->Arg(16)->Arg(64);

void BM_DiracEuler(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(simulate({1.0, 0.0}, {0.1, 0.01, Integrator::kEulerSimultaneous, 10000}));
}
BENCHMARK(BM_DiracEuler)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
