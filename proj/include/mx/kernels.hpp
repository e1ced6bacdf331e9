#pragma once

#include "mx/matrix.hpp"
#include "mx/rvv/isa.hpp"
#include "mx/rvv/machine.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mx::kernels {

enum class KernelKind : std::uint8_t { rvv_baseline, spatz_baseline, vmxdotp, plain_fp32, plain_bf16 };

// "rvv-baseline", "spatz-baseline", "vmxdotp", "plain-fp32", "plain-bf16"
std::string_view name(KernelKind kind);
// Accepts the dashed names above and their underscore spellings.
std::optional<KernelKind> parse_kernel(std::string_view text);
bool is_mx(KernelKind kind);

// Elements per vmxdotp lane: FLEN / element bits.
std::size_t hardware_k(FormatKind elem, unsigned flen);

// Zero tile sizes and unroll mean "use the kernel default".
struct KernelConfig {
    KernelKind kind = KernelKind::vmxdotp;
    std::size_t M = 64, N = 128, P = 64;
    std::size_t k_sw = 32;
    std::size_t m_tile = 0, p_tile = 0;
    std::size_t unroll = 0;
    FormatKind elem = FormatKind::fp8_e4m3;
    FormatKind acc = FormatKind::fp32;
    unsigned flen = 64;
    unsigned vlen = 512;

    // JSON object with the keys kind, M, N, P, k_sw, m_tile, p_tile, unroll,
    // elem, acc, flen, vlen. Missing keys keep their defaults.
    static KernelConfig from_json(std::string_view text);
    std::string to_json(int indent = 2) const;

    friend bool operator==(const KernelConfig&, const KernelConfig&) = default;
};

// Fills defaults and checks every constraint; throws Error(config).
KernelConfig resolve(const KernelConfig& cfg);

struct MemoryRegion {
    std::string name;   // A, As, B, Bs, C
    std::size_t offset = 0;
    std::size_t bytes = 0;
    std::string layout; // human-readable element order
};

struct KernelProgram {
    KernelConfig config; // resolved
    rvv::Program program;
    std::vector<MemoryRegion> regions;
    std::map<std::string, unsigned> vregs; // vector register groups by role
    std::size_t memory_bytes = 0;
    std::size_t unroll = 1;       // copies of the inner body per loop iteration
    std::size_t inner_trip = 0;   // inner loop iterations per software block (or per tile for plain)
    std::size_t tiles = 0;

    const MemoryRegion& region(std::string_view name) const;
    rvv::MachineConfig machine_config() const;
};

KernelProgram build(const KernelConfig& cfg);
KernelProgram build_rvv_baseline(const KernelConfig& cfg);
KernelProgram build_spatz_baseline(const KernelConfig& cfg);
KernelProgram build_vmxdotp(const KernelConfig& cfg);
KernelProgram build_plain(const KernelConfig& cfg);

// Orientation of B each kernel expects: N x P blocked along rows for the
// baselines, P x N blocked along columns (column-major B) for vmxdotp.
// Throws Error(shape) with a hint when the operands do not fit the kernel.
void check_operands(const KernelConfig& cfg, const MxMatrix& a, const MxMatrix& b);
// B in the N x P orientation the matrix reference takes.
MxMatrix reference_b(const MxMatrix& b);

// Configuration implied by the operand shapes (M, N, P, k_sw, elem).
KernelConfig config_for(KernelConfig base, const MxMatrix& a, const MxMatrix& b);
KernelConfig config_for(KernelConfig base, const DenseMatrix& a, const DenseMatrix& b);

void stage(rvv::VectorMachine& m, const KernelProgram& kp, const MxMatrix& a, const MxMatrix& b);
void stage(rvv::VectorMachine& m, const KernelProgram& kp, const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix read_result(const rvv::VectorMachine& m, const KernelProgram& kp);

struct RunOutput {
    DenseMatrix c;
    rvv::Trace trace;
    std::uint64_t retired = 0;
};

RunOutput run(const KernelProgram& kp, const MxMatrix& a, const MxMatrix& b, bool record_trace = true);
RunOutput run(const KernelProgram& kp, const DenseMatrix& a, const DenseMatrix& b, bool record_trace = true);

// Accumulation order the kernel implements: per hardware issue for vmxdotp,
// per-block partial sums with one (rvv) or two (spatz) products per rounding.
AccumulationOrder reference_order(const KernelConfig& cfg);
DenseMatrix reference(const KernelConfig& cfg, const MxMatrix& a, const MxMatrix& b);
DenseMatrix reference(const KernelConfig& cfg, const DenseMatrix& a, const DenseMatrix& b);

} // namespace mx::kernels
