#pragma once

#include "mx/error.hpp"
#include "mx/format.hpp"
#include "mx/matrix.hpp"
#include "mx/rvv/isa.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mx::rvv {

struct MachineConfig {
    unsigned vlen = 512;
    unsigned flen = 64;
    std::size_t memory_bytes = 128 * 1024;

    friend bool operator==(const MachineConfig&, const MachineConfig&) = default;
};

// One retired instruction with the vector configuration it issued under.
struct TraceEntry {
    std::uint32_t pc = 0;
    VType vtype{};
    std::uint32_t vl = 0;

    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};
using Trace = std::vector<TraceEntry>;

// Functional model of one core complex: scalar and vector register files,
// vtype/vl, the element-format CSR and a flat little-endian memory.
// Tail policy is undisturbed; masking is not modelled.
class VectorMachine {
public:
    explicit VectorMachine(MachineConfig cfg = {});

    const MachineConfig& config() const { return cfg_; }
    unsigned vlenb() const { return cfg_.vlen / 8; }

    std::array<std::uint32_t, 32> x{};
    std::array<std::uint64_t, 32> f{}; // low FLEN bits used, no NaN boxing
    VType vtype{};
    std::uint32_t vl = 0;
    FormatKind mxfmt = FormatKind::fp8_e4m3; // element format CSR
    bool fp16alt = false;                    // 16-bit FP is BF16 when set
    std::vector<std::uint8_t> vrf;
    std::vector<std::uint8_t> mem;

    // vsetvli: vl = min(avl, VLMAX); an illegal request sets vill and vl = 0.
    std::uint32_t set_vl(std::uint64_t avl, VType requested);

    // Element i (eew bits) of the register group starting at `base`.
    std::uint64_t element(unsigned base, unsigned eew, std::size_t i) const;
    void set_element(unsigned base, unsigned eew, std::size_t i, std::uint64_t bits);

    std::uint64_t load(std::uint64_t addr, unsigned bytes) const;
    void store(std::uint64_t addr, unsigned bytes, std::uint64_t value);
    void write_bytes(std::uint64_t addr, std::span<const std::uint8_t> bytes);
    std::vector<std::uint8_t> read_bytes(std::uint64_t addr, std::size_t n) const;

    // Executes one instruction at index pc and returns the next index.
    std::size_t execute(const Instruction& ins, std::size_t pc);

    friend bool operator==(const VectorMachine&, const VectorMachine&) = default;

private:
    MachineConfig cfg_;
};

// Instruction-level failure: carries the instruction index and a JSON
// register dump taken at the fault.
class ExecutionError : public Error {
public:
    ExecutionError(ErrorCode code, std::size_t index, const std::string& what, std::string snapshot)
        : Error(code, what), index_(index), snapshot_(std::move(snapshot))
    {
    }
    std::size_t index() const { return index_; }
    const std::string& snapshot() const { return snapshot_; }

private:
    std::size_t index_;
    std::string snapshot_;
};

struct RunOptions {
    bool record_trace = true;
    std::uint64_t max_steps = std::uint64_t(1) << 32;
};

struct RunResult {
    Trace trace;
    std::uint64_t retired = 0;
};

RunResult run_program(VectorMachine& m, const Program& prog, const RunOptions& opts = {});

// JSON dump of vtype, vl, CSRs and all register files (hex strings for FP and vector state).
std::string register_dump_json(const VectorMachine& m, int indent = 2);

// First `count` elements of a register group, decoded as fmt (FP32, BF16 or FP16).
DenseMatrix read_vector(const VectorMachine& m, unsigned base, std::size_t count, FormatKind fmt);

// Lane update shared by the vmxdotp family: acc += 2^(s3+s4-254) * sum_j a[j]*b[j]
// with one rounding into acc_fmt. a and b hold element encodings of elem_fmt.
std::uint32_t mx_dot_accumulate(std::uint32_t acc_bits, FormatKind acc_fmt, FormatKind elem_fmt,
                                std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                                std::uint8_t s3, std::uint8_t s4);

} // namespace mx::rvv
