#pragma once

#include "mx/kernels.hpp"
#include "mx/rvv/isa.hpp"
#include "mx/rvv/machine.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace mx::perf {

enum class InstrClass : std::uint8_t { fma, fp_convert, mx_scaling, vmxdotp, overhead };
inline constexpr std::array<InstrClass, 5> all_classes{InstrClass::fma, InstrClass::fp_convert,
                                                       InstrClass::mx_scaling, InstrClass::vmxdotp,
                                                       InstrClass::overhead};
std::string_view name(InstrClass c);

// vfmacc.vv is classed as scaling: the kernels only use it to apply block scales.
InstrClass classify(rvv::Op op);
// Throws Error(parse) for an unknown mnemonic.
InstrClass classify(std::string_view mnemonic);

// Per-core-complex throughputs. VAU entries are element bits per cycle,
// counted on the widest operand of the instruction.
struct CostTable {
    std::map<std::string, double> vau_bits; // per mnemonic; filled with defaults
    double vlsu_bits = 128.0;
    unsigned fpus = 4;
    double blocks_per_fpu = 1.0;  // vmxdotp lanes per FPU per cycle
    double scalar_overhead = 2.0; // cycles per loop iteration (branch, address math)
    double vsetvli_cycles = 1.0;
    double scalar_fp_cycles = 1.0; // fcvt.h.b / fcvtp.h.b on the VAU
    unsigned cores = 2;            // per cluster
    unsigned stall_period = 8;     // cycles between scale prefetches

    // 256 FP bits and 64 integer bits per cycle per core complex.
    static CostTable defaults();
    // Keys of the object override the defaults; vau_bits entries are merged.
    static CostTable from_json(std::string_view text);
    std::string to_json(int indent = 2) const;
};

struct Cost {
    rvv::Unit unit = rvv::Unit::scalar;
    std::uint64_t cycles = 0;
};

// Cycles on the unit that executes the instruction. Scalar instructions cost
// one issue slot, which every instruction also takes on the scalar core.
Cost cost(const rvv::Instruction& ins, const rvv::VType& vtype, std::uint32_t vl, const CostTable& t);

// Scale-prefetch stall: a vector-vector vmxdotp whose vd, vs2 and vs4 are not
// in pairwise distinct banks (register % 4) loses one cycle per stall_period
// cycles of such issues. Vector-scalar forms never stall.
bool bank_conflict(const rvv::Instruction& ins);
std::uint64_t scale_prefetch_stall(const rvv::Program& prog, const rvv::Trace& trace, const CostTable& t);

struct CycleReport {
    std::uint64_t total = 0;
    std::uint64_t vau_busy = 0;
    std::map<InstrClass, std::uint64_t> vau_class; // sums to vau_busy; stalls count as overhead
    std::uint64_t vlsu = 0;
    std::uint64_t scalar = 0;
    std::uint64_t stalls = 0;
    std::uint64_t segments = 0;
    std::uint64_t retired = 0;
    double flops = 0;
    double flop_per_cycle = 0;      // cluster
    double peak_flop_per_cycle = 0; // cluster
    double utilization = 0;         // (fma + vmxdotp cycles) / total

    double fraction(InstrClass c) const; // of total cycles
    double vau_fraction(InstrClass c) const;
    std::string to_json(int indent = 2) const;
    std::string to_csv() const;
};

// Splits the trace after every branch; each piece costs
// max(VAU, VLSU, issued instructions + scalar overhead).
// flops/peak feed the FLOP/cycle fields; the trace stands for one core
// complex running the whole problem, scaled by `cores` for the cluster.
CycleReport analyze(const rvv::Program& prog, const rvv::Trace& trace, const CostTable& t, double flops = 0,
                    double peak_flop_per_cycle = 0);
CycleReport analyze(const kernels::KernelProgram& kp, const rvv::Trace& trace, const CostTable& t);

// Cluster peak for the kernel's format: vmxdotp rate for MX kernels, FMA rate for plain ones.
double peak_flop_per_cycle(const kernels::KernelConfig& cfg, const CostTable& t);

} // namespace mx::perf
