#include <benchmark/benchmark.h>

#include <vector>

#include "ptcmil/data.hpp"
#include "ptcmil/model.hpp"
#include "ptcmil/nn.hpp"
#include "ptcmil/prompt.hpp"
#include "ptcmil/rng.hpp"
#include "ptcmil/tensor.hpp"
#include "ptcmil/train.hpp"

namespace {

using namespace ptcmil;

Tensor random_tokens(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
  for (double& v : vals) v = rng.normal();
  return Tensor::from_values(rows, cols, vals);
}

BagRecord witness_bag(int instances, std::uint64_t seed) {
  SyntheticClassConfig cfg;
  cfg.bags_per_class = 1;
  cfg.n_min = instances;
  cfg.n_max = instances;
  cfg.seed = seed;
  return gen_classification_bags(cfg)[1];  // index 1 is the positive bag
}

void BM_EncoderForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ParamRegistry reg;
  Rng rng(11);
  EncoderLayer layer = EncoderLayer::create("bench", 32, 4, rng, reg);
  const Tensor tokens = random_tokens(n, 32, 12);
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer(tokens));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EncoderForward)->Arg(32)->Arg(128)->Arg(512);

void BM_OrthonormalInit(benchmark::State& state) {
  const int clusters = static_cast<int>(state.range(0));
  Rng rng(21);
  for (auto _ : state) {
    benchmark::DoNotOptimize(orthonormal_rows(clusters, 32, rng));
  }
}
BENCHMARK(BM_OrthonormalInit)->Arg(5)->Arg(16)->Arg(32);

void BM_AssignPartition(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor tokens = random_tokens(n, 32, 31);
  Rng rng(32);
  const Tensor prompts = Tensor::from_values(8, 32, orthonormal_rows(8, 32, rng));
  for (auto _ : state) {
    Tensor a = assign(tokens, prompts);
    benchmark::DoNotOptimize(partition(a));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AssignPartition)->Arg(64)->Arg(256)->Arg(1024);

void BM_ModelEvaluate(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Model model(ModelConfig{}, 41);
  const BagRecord bag = witness_bag(n, 42);
  const Tensor features = bag.features_tensor();
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.evaluate(features));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ModelEvaluate)->Arg(32)->Arg(64)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Model model(ModelConfig{}, 51);
  const BagRecord bag = witness_bag(n, 52);
  Adam opt(AdamConfig{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(model, bag, opt, 2e-4));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Arg(128);

void BM_CIndex(benchmark::State& state) {
  const int patients = static_cast<int>(state.range(0));
  Rng rng(61);
  std::vector<double> risks(static_cast<std::size_t>(patients));
  std::vector<int> bins(static_cast<std::size_t>(patients));
  std::vector<int> censored(static_cast<std::size_t>(patients));
  for (int i = 0; i < patients; ++i) {
    risks[static_cast<std::size_t>(i)] = rng.normal();
    bins[static_cast<std::size_t>(i)] = rng.uniform_int(0, 3);
    censored[static_cast<std::size_t>(i)] = rng.uniform(0.0, 1.0) < 0.3 ? 1 : 0;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(c_index(risks, bins, censored));
  }
}
BENCHMARK(BM_CIndex)->Arg(128)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
