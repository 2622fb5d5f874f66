#include <benchmark/benchmark.h>

#include "swinfuse/encoder.hpp"
#include "swinfuse/fusion.hpp"
#include "swinfuse/pipeline.hpp"
#include "swinfuse/training.hpp"

#include <random>

using namespace swinfuse;

namespace {

Tensor<float> random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

ModelConfig bench_config(int channels, int tile) {
    ModelConfig cfg;
    cfg.channels = channels;
    cfg.rstb_count = 3;
    cfg.stl_count = 6;
    cfg.window = 7;
    cfg.heads = {1, 2, 4};
    cfg.mlp_ratio = 4.0;
    cfg.tile = tile;
    return cfg;
}

} // namespace

static void Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Tensor<float> a = random_tensor({n, n}, 1);
    Tensor<float> b = random_tensor({n, n}, 2);
    for (auto _ : state) {
        Tensor<float> c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(Matmul)->Arg(64)->Arg(128)->Arg(256);

static void WindowRoundTrip(benchmark::State& state) {
    Tensor<float> x = random_tensor({224, 224, 16}, 3);
    for (auto _ : state) {
        Tensor<float> rt = window_reverse(window_partition(x, 7), 7, 224, 224);
        benchmark::DoNotOptimize(rt.data().data());
    }
}
BENCHMARK(WindowRoundTrip);

static void FuseFeatures(benchmark::State& state) {
    SequenceFeatures<float> a{random_tensor({3136, 96}, 4), 56, 56};
    SequenceFeatures<float> b{random_tensor({3136, 96}, 5), 56, 56};
    for (auto _ : state) {
        auto fused = fuse_features(a, b, FusionMode::RowPlusCol);
        benchmark::DoNotOptimize(fused.tokens.data().data());
    }
}
BENCHMARK(FuseFeatures);

static void SsimLoss(benchmark::State& state) {
    Tensor<float> a = random_tensor({224, 224}, 6);
    Tensor<float> b = random_tensor({224, 224}, 7);
    for (auto _ : state) {
        Tensor<float> loss = ssim_loss(a, b);
        benchmark::DoNotOptimize(loss.value());
    }
}
BENCHMARK(SsimLoss);

static void EncodeTile(benchmark::State& state) {
    const int tile = static_cast<int>(state.range(0));
    const int channels = static_cast<int>(state.range(1));
    ModelConfig cfg = bench_config(channels, tile);
    ModelParams<float> params = init_params<float>(cfg, 9);
    Tensor<float> img = random_tensor({static_cast<std::size_t>(tile), static_cast<std::size_t>(tile)}, 8);
    for (auto _ : state) {
        SequenceFeatures<float> f = encode(img, params, cfg);
        benchmark::DoNotOptimize(f.tokens.data().data());
    }
}
BENCHMARK(EncodeTile)->Args({28, 16})->Args({56, 32});

BENCHMARK_MAIN();
