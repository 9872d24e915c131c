// Parallel kernels against their serial references. Pass --benchmark_filter
// to pick one; thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "depthcast/loss.hpp"
#include "depthcast/rng.hpp"
#include "depthcast/synth.hpp"
#include "depthcast/warp.hpp"

using namespace depthcast;

namespace {

constexpr int kH = 64;
constexpr int kW = 192;

struct Inputs {
  Intrinsics K = Intrinsics::make(96.0, 96.0, 95.5, 31.5);
  ImageBuffer source{kH, kW, 3};
  ImageBuffer target{kH, kW, 3};
  ScalarMap depth{kH, kW};
  PoseParams pose{0.01, -0.02, 0.005, 0.3, 0.05, 0.1};
  ImageBuffer grad{kH, kW, 3};
  ScalarMap grad_pe{kH, kW};
  synth::Scene scene;

  Inputs() {
    Rng rng(1);
    for (double& v : source.data()) v = rng.uniform();
    for (double& v : target.data()) v = rng.uniform();
    for (double& v : depth.data()) v = rng.uniform(5.0, 15.0);
    for (double& v : grad.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : grad_pe.data()) v = rng.uniform(-1.0, 1.0);
    synth::Primitive wall;
    wall.plane.origin = Vec3(0, 0, 10);
    wall.texture.components = {{0.2, 0.1, 0.2, 0.0}, {-0.1, 0.25, 0.15, 1.0}};
    synth::Primitive box;
    box.kind = synth::Primitive::Kind::Box;
    box.box = {Vec3(-1.5, -1, 7.5), Vec3(1.5, 1.5, 9)};
    box.texture.components = {{0.3, 0.2, 0.2, 0.5}};
    scene.primitives = {wall, box};
  }
};

const Inputs& inputs() {
  static const Inputs in;
  return in;
}

template <bool Parallel>
void BM_reverse_warp(benchmark::State& state) {
  const Inputs& in = inputs();
  const Pose T = pose_from_params(in.pose);
  for (auto _ : state) {
    WarpResult r = Parallel ? reverse_warp(in.source, in.depth, T, in.K) : serial::reverse_warp(in.source, in.depth, T, in.K);
    benchmark::DoNotOptimize(r.image.data().data());
  }
}

template <bool Parallel>
void BM_warp_backward(benchmark::State& state) {
  const Inputs& in = inputs();
  for (auto _ : state) {
    WarpGradients g = Parallel ? warp_backward(in.source, in.depth, in.pose, in.K, in.grad.data())
                               : serial::warp_backward(in.source, in.depth, in.pose, in.K, in.grad.data());
    benchmark::DoNotOptimize(g.d_pose.data());
  }
}

template <bool Parallel>
void BM_ssim(benchmark::State& state) {
  const Inputs& in = inputs();
  for (auto _ : state) {
    ScalarMap m = Parallel ? ssim_dissim(in.target, in.source) : serial::ssim_dissim(in.target, in.source, 1e-4, 9e-4);
    benchmark::DoNotOptimize(m.data().data());
  }
}

template <bool Parallel>
void BM_photometric_backward(benchmark::State& state) {
  const Inputs& in = inputs();
  const WarpResult recon{in.source, ScalarMap(kH, kW, 1.0), ScalarMap(kH, kW), ScalarMap(kH, kW)};
  const LossConfig cfg;
  for (auto _ : state) {
    auto g = Parallel ? photometric_backward(in.target, recon, cfg, in.grad_pe)
                      : serial::photometric_backward(in.target, recon, cfg, in.grad_pe);
    benchmark::DoNotOptimize(g.data());
  }
}

template <bool Parallel>
void BM_render(benchmark::State& state) {
  const Inputs& in = inputs();
  const Pose cam = pose_from_params({0, 0.02, 0, 0.2, 0, 0});
  for (auto _ : state) {
    auto r = Parallel ? synth::render(in.scene, cam, in.K, kH, kW) : synth::serial::render(in.scene, cam, in.K, kH, kW);
    benchmark::DoNotOptimize(r.depth.data().data());
  }
}

}  // namespace

BENCHMARK(BM_reverse_warp<true>)->Name("reverse_warp/parallel");
BENCHMARK(BM_reverse_warp<false>)->Name("reverse_warp/serial");
BENCHMARK(BM_warp_backward<true>)->Name("warp_backward/parallel");
BENCHMARK(BM_warp_backward<false>)->Name("warp_backward/serial");
BENCHMARK(BM_ssim<true>)->Name("ssim_dissim/parallel");
BENCHMARK(BM_ssim<false>)->Name("ssim_dissim/serial");
BENCHMARK(BM_photometric_backward<true>)->Name("photometric_backward/parallel");
BENCHMARK(BM_photometric_backward<false>)->Name("photometric_backward/serial");
BENCHMARK(BM_render<true>)->Name("render/parallel");
BENCHMARK(BM_render<false>)->Name("render/serial");

BENCHMARK_MAIN();
