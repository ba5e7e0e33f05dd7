// Serial vs OpenMP timings for the per-pixel kernels.

#include <benchmark/benchmark.h>

#include "pseudolabel/evaluation.hpp"
#include "pseudolabel/parallel.hpp"
#include "pseudolabel/semantic_volume.hpp"
#include "pseudolabel/synthetic_world.hpp"

using namespace pseudolabel;

namespace {

Execution exec_of(const benchmark::State& state) {
  return state.range(0) ? Execution::kParallel : Execution::kSerial;
}

const SyntheticSequence& sequence() {
  static const SyntheticSequence seq = [] {
    SceneSpec spec;
    spec.trajectory.n_frames = 8;
    spec.noise.flip_rate = 0.2;
    return synthesize(spec);
  }();
  return seq;
}

const SemanticVolume& fused_volume() {
  static const SemanticVolume vol = [] {
    SemanticVolume v(VolumeConfig::for_voxel_size(0.05));
    for (const Frame& f : sequence().frames) integrate_frame(v, f, sequence().intrinsics);
    return v;
  }();
  return vol;
}

void BM_IntegrateFrame(benchmark::State& state) {
  const auto& seq = sequence();
  for (auto _ : state) {
    SemanticVolume vol(VolumeConfig::for_voxel_size(0.05));
    benchmark::DoNotOptimize(integrate_frame(vol, seq.frames.front(), seq.intrinsics, exec_of(state)));
  }
}

void BM_RenderLabels(benchmark::State& state) {
  const auto& vol = fused_volume();
  const auto& seq = sequence();
  for (auto _ : state)
    benchmark::DoNotOptimize(render_labels(vol, seq.frames[3].pose, seq.intrinsics, 8.0, exec_of(state)));
}

void BM_RenderOracle(benchmark::State& state) {
  const Scene scene = default_room_scene();
  const auto& seq = sequence();
  for (auto _ : state)
    benchmark::DoNotOptimize(render_oracle(scene, seq.frames[3].pose, seq.intrinsics, exec_of(state)));
}

void BM_ConfusionAccumulate(benchmark::State& state) {
  const Frame& f = sequence().frames.front();
  for (auto _ : state) {
    ConfusionMatrix cm(LabelSpace{}.num_classes);
    cm.accumulate(f.prediction, *f.ground_truth, exec_of(state));
    benchmark::DoNotOptimize(cm.total());
  }
}

}  // namespace

BENCHMARK(BM_IntegrateFrame)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderLabels)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderOracle)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConfusionAccumulate)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
