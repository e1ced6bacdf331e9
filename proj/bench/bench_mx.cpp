#include "mx/experiment.hpp"
#include "mx/matrix.hpp"
#include "mx/synth.hpp"

#include <benchmark/benchmark.h>

using namespace mx;

namespace {

void quantize(benchmark::State& st, bool parallel)
{
    const auto n = static_cast<std::size_t>(st.range(0));
    const DenseMatrix d = synth_lognormal(n, n, {});
    for (auto _ : st) {
        auto q = parallel ? quantize_matrix(d, FormatKind::fp8_e4m3, 32, BlockAxis::along_cols)
                          : quantize_matrix_serial(d, FormatKind::fp8_e4m3, 32, BlockAxis::along_cols);
        benchmark::DoNotOptimize(q.elements().data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * n));
}

void matmul(benchmark::State& st, bool parallel)
{
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto a = quantize_matrix(synth_lognormal(64, n, {0, 1, 1}), FormatKind::fp8_e4m3, 32, BlockAxis::along_cols);
    const auto b = quantize_matrix(synth_lognormal(n, 64, {0, 1, 2}), FormatKind::fp8_e4m3, 32, BlockAxis::along_rows);
    const auto order = AccumulationOrder::hardware(8);
    for (auto _ : st) {
        auto c = parallel ? mx_matmul_reference(a, b, FormatKind::fp32, order)
                          : mx_matmul_reference_serial(a, b, FormatKind::fp32, order);
        benchmark::DoNotOptimize(c.bits.data());
    }
}

void sweep(benchmark::State& st)
{
    std::vector<kernels::KernelConfig> cfgs;
    for (std::size_t n : {32, 64, 128, 256}) {
        kernels::KernelConfig c;
        c.N = n;
        cfgs.push_back(c);
    }
    for (auto _ : st) benchmark::DoNotOptimize(run_sweep(cfgs, {}, perf::CostTable::defaults(), false).size());
}

} // namespace

BENCHMARK_CAPTURE(quantize, serial, false)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(quantize, parallel, true)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(matmul, serial, false)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(matmul, parallel, true)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(sweep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
