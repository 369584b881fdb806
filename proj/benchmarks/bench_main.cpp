#include <benchmark/benchmark.h>

#include <vector>

#include "wsloc/harness.hpp"
#include "wsloc/rng.hpp"

using namespace wsloc;

namespace {

Grid random_grid(Rng& rng, int rows, int cols) {
  Grid g(rows, cols);
  for (double& v : g.data) v = rng.uniform();
  return g;
}

Network make_network(HeadKind head) {
  NetworkSpec spec;
  spec.head = head;
  spec.pooling.maps_per_class = 4;
  spec.pooling.k = PoolSize::count(2);
  spec.pooling.alpha = 0.6;
  Network net(spec);
  net.initialize(1);
  return net;
}

void BM_PoolMap(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  Rng rng(1);
  std::vector<double> cells(static_cast<std::size_t>(side * side));
  for (double& v : cells) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(pool_map(cells, k, 0.6));
}
BENCHMARK(BM_PoolMap)->Args({4, 1})->Args({4, 8})->Args({8, 1})->Args({8, 32})->Args({32, 16});

void BM_Forward(benchmark::State& state) {
  const Network net = make_network(state.range(0) ? HeadKind::modified : HeadKind::baseline);
  Rng rng(2);
  const Grid x = random_grid(rng, 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x).logits);
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->ArgNames({"modified"});

void BM_InputGradient(benchmark::State& state) {
  const Network net = make_network(state.range(0) ? HeadKind::modified : HeadKind::baseline);
  Rng rng(3);
  const Grid x = random_grid(rng, 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(net.input_gradient(x, 0, BackpropRule::standard));
}
BENCHMARK(BM_InputGradient)->Arg(0)->Arg(1)->ArgNames({"modified"});

void BM_LossGradient(benchmark::State& state) {
  const Network net = make_network(state.range(0) ? HeadKind::modified : HeadKind::baseline);
  Rng rng(4);
  const Grid x = random_grid(rng, 64, 64);
  std::vector<double> grad(net.parameters().size());
  for (auto _ : state) benchmark::DoNotOptimize(net.accumulate_loss_gradient(x, 1.0, grad));
}
BENCHMARK(BM_LossGradient)->Arg(0)->Arg(1)->ArgNames({"modified"});

void BM_IntegratedGradients(benchmark::State& state) {
  const Network net = make_network(HeadKind::baseline);
  Rng rng(5);
  const Image img(random_grid(rng, 64, 64));
  const Grid baseline(64, 64, 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrated_gradients_signed(net, img, baseline, static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_IntegratedGradients)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  std::vector<int> labels(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 2);
    scores[i] = rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(labels, scores));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RocAuc)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oNLogN);

void BM_LocalizationAuprc(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Rng rng(7);
  const Grid map = random_grid(rng, size, size);
  const std::vector<BoundingBox> boxes{{size * 0.2, size * 0.3, size * 0.25, size * 0.3}};
  const AnnotationMask mask = annotation_mask(boxes, size);
  for (auto _ : state) benchmark::DoNotOptimize(localization_auprc(map, mask));
}
BENCHMARK(BM_LocalizationAuprc)->Arg(64)->Arg(256);

void BM_PointwiseAp(benchmark::State& state) {
  const auto images = static_cast<std::size_t>(state.range(0));
  Rng rng(8);
  std::vector<std::vector<Detection>> dets(images);
  std::vector<std::vector<BoundingBox>> gt(images);
  for (std::size_t i = 0; i < images; ++i) {
    if (i % 3 == 0) gt[i].push_back({rng.uniform(0, 40), rng.uniform(0, 40), 20, 20});
    const double cx = rng.uniform(0, 64);
    const double cy = rng.uniform(0, 64);
    dets[i].push_back({{cx - 8, cy - 8, 16, 16}, rng.uniform(), {}});
  }
  for (auto _ : state) benchmark::DoNotOptimize(pointwise_ap(dets, gt));
}
BENCHMARK(BM_PointwiseAp)->Arg(200)->Arg(5000);

}  // namespace

BENCHMARK_MAIN();
