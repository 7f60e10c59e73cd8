#include <benchmark/benchmark.h>

#include <flagifs/bootstrap.hpp>
#include <flagifs/config.hpp>
#include <flagifs/minimality.hpp>

#include <string>

namespace bm = benchmark;
using namespace flagifs;

namespace {

Ifs load(const std::string& name)
{
    return ifs_from_document(load_document(std::string(FLAGIFS_CONFIG_DIR) + "/" + name), "/ifs");
}

}  // namespace

static void BM_QrOf(bm::State& st)
{
    const int d = static_cast<int>(st.range(0));
    CounterRng rng(1);
    const Mat L = random_gaussian(rng, d, d);
    const Flag F = Flag::from_orthonormal(random_orthogonal(rng, d));
    for (auto _ : st) bm::DoNotOptimize(qr_of(L, F));
}
BENCHMARK(BM_QrOf)->DenseRange(2, kMaxDim);

static void BM_DerivativeMatrix(bm::State& st)
{
    const int d = static_cast<int>(st.range(0));
    CounterRng rng(2);
    const Mat L = random_gaussian(rng, d, d);
    const Flag F = Flag::from_orthonormal(random_orthogonal(rng, d));
    for (auto _ : st) bm::DoNotOptimize(derivative_matrix(L, F));
}
BENCHMARK(BM_DerivativeMatrix)->DenseRange(2, kMaxDim);

static void BM_Furstenberg(bm::State& st)
{
    const Ifs ifs = load("linear_d2.toml");
    const auto n = static_cast<std::size_t>(st.range(0));
    for (auto _ : st) {
        RandomSource src(ifs.alphabet(), CounterRng(3));
        SkewPoint start;
        start.flag = Flag::canonical(ifs.dim());
        bm::DoNotOptimize(furstenberg_estimate(ifs, &src, start, n));
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Furstenberg)->Arg(1000)->Arg(100000)->Unit(bm::kMillisecond);

static void BM_ShadowProportion(bm::State& st)
{
    const Ifs ifs = load("linear_d2.toml");
    const auto p = static_cast<std::size_t>(st.range(0));
    CounterRng rng(4);
    Word leader(p), follower(p);
    for (std::size_t i = 0; i < p; ++i) {
        leader[i] = static_cast<int>(rng.below(2));
        follower[i] = i % 7 == 0 ? 3 : leader[i];
    }
    const BundlePoint start{Vec(), Flag::canonical(2)};
    const OrbitTrace lead(ifs, leader, start);
    const OrbitTrace follow(ifs, follower, start);
    for (auto _ : st) bm::DoNotOptimize(shadow_proportion(follow, lead, 0.1));
}
BENCHMARK(BM_ShadowProportion)->Arg(200)->Arg(5000)->Unit(bm::kMicrosecond);

static void BM_GoHome(bm::State& st)
{
    const Ifs ifs = load("circle.toml");
    Vec center(1), from(1);
    center << 0.25;
    from << 0.9;
    const Ball target{{center, Flag::canonical(1)}, 0.01 * static_cast<double>(st.range(0))};
    const BundlePoint start{from, Flag::canonical(1)};
    for (auto _ : st) bm::DoNotOptimize(go_home(ifs, target, start, 16));
}
BENCHMARK(BM_GoHome)->Arg(1)->Arg(5)->Unit(bm::kMicrosecond);

BENCHMARK_MAIN();
