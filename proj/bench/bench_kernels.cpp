#include <benchmark/benchmark.h>

#include <vector>

#include "stereopose/instruments.hpp"
#include "stereopose/kernels.hpp"
#include "stereopose/rng.hpp"
#include "stereopose/synth.hpp"
#include "stereopose/transformer.hpp"

namespace sp = stereopose;
namespace kn = stereopose::kernels;

namespace {

kn::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  sp::Rng rng(seed);
  kn::Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<sp::Vec3> random_points(std::size_t n, std::uint64_t seed) {
  sp::Rng rng(seed);
  std::vector<sp::Vec3> pts(n);
  for (auto& p : pts) p = sp::Vec3(rng.normal(0, 50), rng.normal(0, 50), rng.normal(0, 50));
  return pts;
}

// Activations of a 256-object batch (13 tokens each) times a 128 x 128 projection.
template <void (*Gemm)(kn::ConstMatrixRef, kn::ConstMatrixRef, kn::MatrixRef, bool)>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  kn::set_thread_count(static_cast<int>(state.range(1)));
  const auto a = random_matrix(m, 128, 1), b = random_matrix(128, 128, 2);
  kn::Matrix c(m, 128);
  for (auto _ : state) {
    Gemm(a.cref(), b.cref(), c.ref(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m) * 128 * 128);
}

template <void (*Gemm)(kn::ConstMatrixRef, kn::ConstMatrixRef, kn::MatrixRef, bool)>
void BM_GemmTN(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  kn::set_thread_count(static_cast<int>(state.range(1)));
  const auto a = random_matrix(m, 128, 3), b = random_matrix(m, 128, 4);
  kn::Matrix c(128, 128);
  for (auto _ : state) {
    Gemm(a.cref(), b.cref(), c.ref(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m) * 128 * 128);
}

template <double (*Nearest)(std::span<const sp::Vec3>, std::span<const sp::Vec3>)>
void BM_MeanNearest(benchmark::State& state) {
  kn::set_thread_count(static_cast<int>(state.range(1)));
  const auto a = random_points(static_cast<std::size_t>(state.range(0)), 5);
  const auto b = random_points(static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(Nearest(a, b));
}

template <double (*Diameter)(std::span<const sp::Vec3>)>
void BM_MaxPairwise(benchmark::State& state) {
  kn::set_thread_count(static_cast<int>(state.range(1)));
  const auto a = random_points(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(Diameter(a));
}

void BM_ForwardBatch(benchmark::State& state) {
  kn::set_thread_count(static_cast<int>(state.range(1)));
  const sp::CameraRig rig;
  const auto models = sp::make_instrument_set(1, 13);
  sp::PoseSampler s;
  const auto recs = sp::generate_records(models, rig, s, static_cast<std::size_t>(state.range(0)), std::nullopt);
  std::vector<sp::StereoObservation> obs;
  for (const auto& r : recs) obs.push_back(r.observation);
  const auto params = sp::init_params(sp::ModelConfig{}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(sp::predict(params, obs, rig));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void gemm_args(benchmark::internal::Benchmark* b) {
  for (int m : {13, 832, 3328})
    for (int t : {1, 2, 4}) b->Args({m, t});
}

void point_args(benchmark::internal::Benchmark* b) {
  for (int n : {512, 2048})
    for (int t : {1, 2, 4}) b->Args({n, t});
}

}  // namespace

BENCHMARK(BM_Gemm<kn::serial::gemm_nn>)->Name("gemm_nn/serial")->Apply(gemm_args)->UseRealTime();
BENCHMARK(BM_Gemm<kn::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Apply(gemm_args)->UseRealTime();
BENCHMARK(BM_GemmTN<kn::serial::gemm_tn>)->Name("gemm_tn/serial")->Apply(gemm_args)->UseRealTime();
BENCHMARK(BM_GemmTN<kn::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Apply(gemm_args)->UseRealTime();
BENCHMARK(BM_MeanNearest<kn::serial::mean_nearest_distance>)->Name("mean_nearest/serial")->Apply(point_args)->UseRealTime();
BENCHMARK(BM_MeanNearest<kn::parallel::mean_nearest_distance>)->Name("mean_nearest/parallel")->Apply(point_args)->UseRealTime();
BENCHMARK(BM_MaxPairwise<kn::serial::max_pairwise_distance>)->Name("max_pairwise/serial")->Apply(point_args)->UseRealTime();
BENCHMARK(BM_MaxPairwise<kn::parallel::max_pairwise_distance>)->Name("max_pairwise/parallel")->Apply(point_args)->UseRealTime();
BENCHMARK(BM_ForwardBatch)->Name("forward_batch")->Args({1, 1})->Args({64, 1})->Args({64, 4})->UseRealTime();

BENCHMARK_MAIN();
