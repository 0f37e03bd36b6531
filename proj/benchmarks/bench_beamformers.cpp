#include "beamforge/beamform.hpp"
#include "beamforge/evalsuite.hpp"
#include "beamforge/geometry.hpp"
#include "beamforge/neural.hpp"
#include "beamforge/rng.hpp"
#include "beamforge/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace beamforge;

namespace {

// One held-out point frame on a 16 x 24 grid of the linear preset.
const Dataset &dataset() {
  static const Dataset data = [] {
    DatasetConfig cfg;
    cfg.geometry = preset_geometry(Preset::linear_desk);
    cfg.grid = ImagingGrid::cartesian(-1.2e-3, 1.2e-3, 16, 13.6e-3, 15.2e-3, 24);
    cfg.train_frames = 1;
    cfg.test_frames = 2;
    cfg.target = TargetKind::das;
    cfg.seed = 1;
    return make_dataset(cfg);
  }();
  return data;
}

const FocusedFrame &frame() { return dataset().test[1].input; }

void set_pixels(benchmark::State &state) {
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(frame().pixels()));
}

void BM_Focus(benchmark::State &state) {
  const auto &data = dataset();
  const Point2 target = grid_point(data.grid, 0.5, 0.5);
  const auto raw = simulate_channels(make_point_phantom({&target, 1}), data.geometry, 0.0, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(focus(raw, data.geometry, data.grid));
  set_pixels(state);
}

void BM_Das(benchmark::State &state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(das(frame(), Window::hanning));
  set_pixels(state);
}

void BM_Imap(benchmark::State &state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(imap(frame(), 2));
  set_pixels(state);
}

void BM_Mv(benchmark::State &state) {
  const bool eigen = state.range(0) != 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(mv_beamform(frame(), MVConfig{}, eigen));
  set_pixels(state);
}

void BM_Able(benchmark::State &state) {
  Rng rng(7);
  const auto params = MLPParams::glorot(able_widths(frame().aperture()), 0.0, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(able_beamform(params, frame()));
  set_pixels(state);
}

} // namespace

BENCHMARK(BM_Focus)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Das)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Imap)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Mv)->Arg(0)->Arg(1)->ArgNames({"eigen"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Able)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
