#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "spat/tensor/kernels.hpp"

namespace k = spat::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& e : v) e = u(rng);
    return v;
}

// Channels and plane size of one mid-depth U-Net block at desk scale.
k::ConvGeom conv_geom(const benchmark::State& st) {
    k::ConvGeom g;
    g.batch = 1;
    g.in_channels = g.out_channels = std::size_t(st.range(0));
    g.height = 64;
    g.width = 96;
    return g;
}

void set_threads(benchmark::State& st, int arg_index) {
    k::set_max_threads(int(st.range(arg_index)));
}

void BM_Conv3x3Forward_Serial(benchmark::State& st) {
    const auto g = conv_geom(st);
    auto x = random_vec(g.batch * g.in_channels * g.plane(), 1);
    auto w = random_vec(g.out_channels * g.patch(), 2);
    auto b = random_vec(g.out_channels, 3);
    std::vector<float> y(g.batch * g.out_channels * g.plane());
    for (auto _ : st) {
        k::serial::conv3x3_forward<float>(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * std::int64_t(y.size()));
}

void BM_Conv3x3Forward_Parallel(benchmark::State& st) {
    set_threads(st, 1);
    const auto g = conv_geom(st);
    auto x = random_vec(g.batch * g.in_channels * g.plane(), 1);
    auto w = random_vec(g.out_channels * g.patch(), 2);
    auto b = random_vec(g.out_channels, 3);
    std::vector<float> y(g.batch * g.out_channels * g.plane());
    for (auto _ : st) {
        k::parallel::conv3x3_forward<float>(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * std::int64_t(y.size()));
}

void BM_Conv3x3Backward_Serial(benchmark::State& st) {
    const auto g = conv_geom(st);
    auto x = random_vec(g.batch * g.in_channels * g.plane(), 1);
    auto w = random_vec(g.out_channels * g.patch(), 2);
    auto gy = random_vec(g.batch * g.out_channels * g.plane(), 4);
    std::vector<float> gx(x.size()), gw(w.size()), gb(g.out_channels);
    for (auto _ : st) {
        k::serial::conv3x3_backward_input<float>(g, gy, w, gx);
        k::serial::conv3x3_backward_params<float>(g, gy, x, gw, gb);
        benchmark::DoNotOptimize(gx.data());
        benchmark::DoNotOptimize(gw.data());
    }
}

void BM_Conv3x3Backward_Parallel(benchmark::State& st) {
    set_threads(st, 1);
    const auto g = conv_geom(st);
    auto x = random_vec(g.batch * g.in_channels * g.plane(), 1);
    auto w = random_vec(g.out_channels * g.patch(), 2);
    auto gy = random_vec(g.batch * g.out_channels * g.plane(), 4);
    std::vector<float> gx(x.size()), gw(w.size()), gb(g.out_channels);
    for (auto _ : st) {
        k::parallel::conv3x3_backward<float>(g, gy, x, w, gx, gw, gb);
        benchmark::DoNotOptimize(gx.data());
        benchmark::DoNotOptimize(gw.data());
    }
}

k::PlaneGeom plane_geom() { return {4, 64, 64, 96}; }

void BM_GroupNormForward_Serial(benchmark::State& st) {
    const auto g = plane_geom();
    auto x = random_vec(g.numel(), 5);
    std::vector<float> gamma(g.channels, 1.0f), beta(g.channels, 0.0f), y(g.numel()), mean(g.batch * 8), rstd(g.batch * 8);
    for (auto _ : st) {
        k::serial::group_norm_forward<float>(g, 8, 1e-5f, x, gamma, beta, y, mean, rstd);
        benchmark::DoNotOptimize(y.data());
    }
    st.SetBytesProcessed(st.iterations() * std::int64_t(g.numel() * sizeof(float)));
}

void BM_GroupNormForward_Parallel(benchmark::State& st) {
    set_threads(st, 0);
    const auto g = plane_geom();
    auto x = random_vec(g.numel(), 5);
    std::vector<float> gamma(g.channels, 1.0f), beta(g.channels, 0.0f), y(g.numel()), mean(g.batch * 8), rstd(g.batch * 8);
    for (auto _ : st) {
        k::parallel::group_norm_forward<float>(g, 8, 1e-5f, x, gamma, beta, y, mean, rstd);
        benchmark::DoNotOptimize(y.data());
    }
    st.SetBytesProcessed(st.iterations() * std::int64_t(g.numel() * sizeof(float)));
}

void BM_MaxPool2_Serial(benchmark::State& st) {
    const auto g = plane_geom();
    auto x = random_vec(g.numel(), 6);
    std::vector<float> y(g.numel() / 4);
    std::vector<std::size_t> arg(y.size());
    for (auto _ : st) {
        k::serial::maxpool2_forward<float>(g, x, y, arg);
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_MaxPool2_Parallel(benchmark::State& st) {
    set_threads(st, 0);
    const auto g = plane_geom();
    auto x = random_vec(g.numel(), 6);
    std::vector<float> y(g.numel() / 4);
    std::vector<std::size_t> arg(y.size());
    for (auto _ : st) {
        k::parallel::maxpool2_forward<float>(g, x, y, arg);
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_ResizeBilinear_Serial(benchmark::State& st) {
    const k::PlaneGeom g{1, 96, 512, 768};
    auto x = random_vec(g.numel(), 7);
    std::vector<float> y(g.batch * g.channels * 128 * 192);
    for (auto _ : st) {
        k::serial::resize_bilinear_forward<float>(g, 128, 192, x, y);
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_ResizeBilinear_Parallel(benchmark::State& st) {
    set_threads(st, 0);
    const k::PlaneGeom g{1, 96, 512, 768};
    auto x = random_vec(g.numel(), 7);
    std::vector<float> y(g.batch * g.channels * 128 * 192);
    for (auto _ : st) {
        k::parallel::resize_bilinear_forward<float>(g, 128, 192, x, y);
        benchmark::DoNotOptimize(y.data());
    }
}

void thread_counts(benchmark::internal::Benchmark* b, bool with_channels) {
    const int hw = k::max_threads();
    std::vector<int> counts{1};
    for (int t = 2; t <= hw; t *= 2) counts.push_back(t);
    if (counts.back() != hw) counts.push_back(hw);
    for (int t : counts) {
        if (with_channels) {
            b->Args({32, t});
            b->Args({64, t});
        } else {
            b->Args({t});
        }
    }
}

}  // namespace

BENCHMARK(BM_Conv3x3Forward_Serial)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3Forward_Parallel)->Apply([](auto* b) { thread_counts(b, true); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3Backward_Serial)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3Backward_Parallel)->Apply([](auto* b) { thread_counts(b, true); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroupNormForward_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroupNormForward_Parallel)->Apply([](auto* b) { thread_counts(b, false); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool2_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool2_Parallel)->Apply([](auto* b) { thread_counts(b, false); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResizeBilinear_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResizeBilinear_Parallel)->Apply([](auto* b) { thread_counts(b, false); })->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
