#include <benchmark/benchmark.h>

#include "atfs/attack.hpp"
#include "atfs/metrics.hpp"
#include "atfs/patterns.hpp"
#include "atfs/robustness.hpp"

using namespace atfs;

namespace {

Tensor noise(Shape shape, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& e : v) e = rng.uniform(-1.0, 1.0);
    return Tensor::from(std::move(shape), std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto x = noise({c, 32, 32}, 1);
    const auto w = noise({c, c, 3, 3}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, std::nullopt, {1, 1}));
}
BENCHMARK(BM_Conv2dForward)->Arg(3)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
    const auto x0 = noise({16, 32, 32}, 1);
    const auto w = noise({16, 16, 3, 3}, 2);
    for (auto _ : state) {
        auto x = Tensor::from(x0.shape(), x0.to_vector(), true);
        backward(sq_l2_norm(conv2d(x, w, std::nullopt, {1, 1})));
        benchmark::DoNotOptimize(x.grad().data());
    }
}
BENCHMARK(BM_Conv2dBackward);

FeatureExtractor by_index(int i) {
    switch (i) {
        case 0: return build_vae_proxy(1);
        case 1: return build_gan_proxy(2);
        default: return build_vqvae_proxy(3);
    }
}

void BM_ExtractorGradient(benchmark::State& state) {
    const auto e = by_index(static_cast<int>(state.range(0)));
    const auto x = gen_face_fixture(0);
    const auto t = e.extract(gen_moire(32, 32, 0, 45));
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(e, x, LossKind::alignment, t));
    state.SetLabel(e.name());
}
BENCHMARK(BM_ExtractorGradient)->DenseRange(0, 2);

void BM_AttackIteration(benchmark::State& state) {
    const std::vector<FeatureExtractor> ex = {build_vae_proxy(1), build_gan_proxy(2)};
    const auto x = gen_face_fixture(0);
    const auto t = gen_moire(32, 32, 0, 45);
    AttackConfig c;
    c.method = static_cast<Method>(state.range(0));
    c.steps = 10;
    for (auto _ : state) benchmark::DoNotOptimize(run_attack(ex, x, t, c));
    state.SetItemsProcessed(state.iterations() * 10);
    state.SetLabel(std::string(to_string(c.method)));
}
BENCHMARK(BM_AttackIteration)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_MsSsim(benchmark::State& state) {
    const auto a = gen_face_fixture(0);
    const auto b = add_gaussian_noise(a, 0.05, 1);
    for (auto _ : state) benchmark::DoNotOptimize(ms_ssim(a, b));
}
BENCHMARK(BM_MsSsim);

void BM_JpegApprox(benchmark::State& state) {
    const auto a = gen_face_fixture(0);
    for (auto _ : state) benchmark::DoNotOptimize(jpeg_approx(a, 75));
}
BENCHMARK(BM_JpegApprox);

}  // namespace

BENCHMARK_MAIN();
