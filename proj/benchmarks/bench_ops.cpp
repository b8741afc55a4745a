#include <benchmark/benchmark.h>

#include <random>

#include "cladnet/classifier.hpp"
#include "cladnet/ssl_objectives.hpp"

using namespace cladnet;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Tensor out({r, c});
  for (double& v : out.values()) v = dist(rng);
  return out;
}

BodyPartition two_parts() {
  BodyPartition p;
  p.groups = {{0, 1, 2}, {3, 4, 5}};
  p.query = 0;
  return p;
}

TransformerConfig bench_transformer() {
  TransformerConfig cfg;
  cfg.d_model = 32;
  cfg.heads = 4;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = random_matrix(n, n, rng);
  const Tensor b = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_Conv1d(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Tensor x = random_matrix(16, 128, rng);
  std::normal_distribution<double> dist;
  Tensor kernels({32, 16, 5});
  for (double& v : kernels.values()) v = dist(rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(
        conv1d(tape.constant(x), tape.constant(kernels), 1, 2).value().data().data());
  }
}
BENCHMARK(BM_Conv1d);

static void BM_TransformerForward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  ParameterStore params;
  const BodyPartition p = two_parts();
  const TransformerConfig cfg = bench_transformer();
  init_transformer_params(params, p, {3, 3}, cfg, rng);
  const Tensor window = random_matrix(64, 6, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(transformer_represent(params, window, p, cfg).data().data());
  }
}
BENCHMARK(BM_TransformerForward);

static void BM_TransformerBackward(benchmark::State& state) {
  std::mt19937_64 rng(4);
  ParameterStore params;
  const BodyPartition p = two_parts();
  const TransformerConfig cfg = bench_transformer();
  init_transformer_params(params, p, {3, 3}, cfg, rng);
  const Tensor window = random_matrix(64, 6, rng);
  const Tensor probe = random_matrix(1, cfg.d_model, rng);
  for (auto _ : state) {
    Tape tape;
    Var r = transformer_forward(tape, params, window, p, cfg);
    Var loss = sum(mul(r, tape.constant(probe)));
    benchmark::DoNotOptimize(tape.backward(loss).by_param.size());
  }
}
BENCHMARK(BM_TransformerBackward);

static void BM_CnnForward(benchmark::State& state) {
  std::mt19937_64 rng(5);
  ParameterStore params;
  CnnConfig cfg;
  init_cnn_params(params, 6, cfg, rng);
  init_head_params(params, cfg.widths.back(), 12, rng);
  const Tensor window = random_matrix(64, 6, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(classifier_logits(params, window, cfg, nullptr).data().data());
  }
}
BENCHMARK(BM_CnnForward);

static void BM_BarlowTwinsLoss(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const Tensor r1 = random_matrix(32, 64, rng);
  const Tensor r2 = random_matrix(32, 64, rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(
        barlow_twins_loss(tape.constant(r1), tape.constant(r2), 1.0).value().scalar_value());
  }
}
BENCHMARK(BM_BarlowTwinsLoss);

static void BM_SslTrainStep(benchmark::State& state) {
  std::mt19937_64 rng(7);
  ParameterStore params;
  const BodyPartition p = two_parts();
  const TransformerConfig cfg = bench_transformer();
  init_transformer_params(params, p, {3, 3}, cfg, rng);

  SslConfig ssl;
  ssl.augment.kind = AugmentKind::kCropResize;
  SslTrainer trainer(ssl, p, cfg, 9);

  std::vector<SensorWindow> windows;
  for (int i = 0; i < 16; ++i) {
    SensorWindow w;
    w.subject = 1;
    w.data = random_matrix(64, 6, rng);
    windows.push_back(std::move(w));
  }
  std::vector<const SensorWindow*> batch;
  for (const auto& w : windows) batch.push_back(&w);
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.train_step(batch, params));
  }
}
BENCHMARK(BM_SslTrainStep);

BENCHMARK_MAIN();
