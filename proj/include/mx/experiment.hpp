#pragma once

#include "mx/kernels.hpp"
#include "mx/perf.hpp"
#include "mx/synth.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace mx {

// Synthetic operands for one kernel configuration: FP32 data drawn with
// `synth`, quantized along the reduction axis for MX kernels (B handed over in
// the orientation the kernel expects).
struct Operands {
    std::variant<std::monostate, DenseMatrix, MxMatrix> a, b;
};
Operands make_operands(const kernels::KernelConfig& cfg, const SynthParams& synth);

struct PointResult {
    kernels::KernelConfig config; // resolved
    perf::CycleReport report;
    DenseMatrix c;
    std::size_t mismatches = 0; // elements differing from the reference (0 when unchecked)
    bool checked = false;
};

// Build, stage, run and analyze one configuration; optionally compare every
// output bit against the reference for the kernel's accumulation order.
PointResult run_point(const kernels::KernelConfig& cfg, const Operands& ops, const perf::CostTable& table,
                      bool check);
PointResult run_point(const kernels::KernelConfig& cfg, const SynthParams& synth, const perf::CostTable& table,
                      bool check);

// Independent points run concurrently, one machine each; results keep input order.
std::vector<PointResult> run_sweep(const std::vector<kernels::KernelConfig>& cfgs, const SynthParams& synth,
                                   const perf::CostTable& table, bool check);

// Number of differing bit patterns between two same-shape matrices.
std::size_t count_mismatches(const DenseMatrix& x, const DenseMatrix& y);

} // namespace mx
