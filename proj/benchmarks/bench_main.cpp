#include "vopf/cpgflow.hpp"
#include "vopf/geometry.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace vopf;

namespace {

const Network& bundled(int which) {
    static const Network n9 = parse_case_file(VOPF_DATA_DIR "/case9mod.m");
    static const Network n39 = parse_case_file(VOPF_DATA_DIR "/case39mod2.m");
    static const Network n118 = parse_case_file(VOPF_DATA_DIR "/case118mod.m");
    return which == 9 ? n9 : (which == 39 ? n39 : n118);
}

ControlPoint mid_control(const Network& net) {
    const auto box = control_box(net);
    return ControlPoint{0.5 * (box.lower + box.upper)};
}

std::vector<NormalizedPoint> cloud(std::size_t count, Eigen::Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d;
    std::vector<NormalizedPoint> pts;
    for (std::size_t i = 0; i < count; ++i) {
        Vector z(dim);
        for (Eigen::Index k = 0; k < dim; ++k) z[k] = d(rng);
        pts.push_back({z, i});
    }
    return pts;
}

void BM_Delaunay(benchmark::State& state) {
    const auto pts = cloud(static_cast<std::size_t>(state.range(0)), state.range(1), 1);
    for (auto _ : state) benchmark::DoNotOptimize(delaunay(pts));
}
BENCHMARK(BM_Delaunay)->Args({100, 2})->Args({100, 5})->Args({200, 5})->Args({25, 19})->Unit(benchmark::kMillisecond);

void BM_RankedVertices(benchmark::State& state) {
    const auto pts = cloud(static_cast<std::size_t>(state.range(0)), state.range(1), 2);
    const auto tri = delaunay(pts);
    for (auto _ : state) benchmark::DoNotOptimize(ranked_vertices({&tri}, pts));
}
BENCHMARK(BM_RankedVertices)->Args({100, 3})->Args({100, 5})->Unit(benchmark::kMillisecond);

void BM_PowerFlow(benchmark::State& state) {
    const auto& net = bundled(static_cast<int>(state.range(0)));
    const auto u = mid_control(net);
    for (auto _ : state) benchmark::DoNotOptimize(solve(net, u));
}
BENCHMARK(BM_PowerFlow)->Arg(9)->Arg(39)->Arg(118)->Unit(benchmark::kMicrosecond);

void BM_Psi(benchmark::State& state) {
    const auto& net = bundled(static_cast<int>(state.range(0)));
    const auto u = mid_control(net);
    const auto st = solve(net, u);
    const auto x = st.converged ? lift(net, u, st) : lift_unchecked(net, st);
    const OpfFlowSystem sys(net);
    for (auto _ : state) benchmark::DoNotOptimize(psi(sys, x.x, auto_cost_scale(net)));
}
BENCHMARK(BM_Psi)->Arg(9)->Arg(118)->Unit(benchmark::kMicrosecond);

void BM_Jacobian(benchmark::State& state) {
    const auto& net = bundled(static_cast<int>(state.range(0)));
    const auto u = mid_control(net);
    const auto st = solve(net, u);
    const auto x = lift_unchecked(net, st);
    for (auto _ : state) benchmark::DoNotOptimize(jacobian_g(net, x));
}
BENCHMARK(BM_Jacobian)->Arg(9)->Arg(118)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
