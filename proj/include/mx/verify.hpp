#pragma once

#include "mx/format.hpp"
#include "mx/rvv/isa.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mx {

struct VerifyOptions {
    std::uint64_t seed = 1;
    std::size_t fuzz_cases = 1000; // per vmxdotp instruction and element format
    std::size_t kernel_n = 64;     // inner dimension of the kernel checks (M = P = 16)
    // Optional mutation of encode() results inside the codec suite, used to
    // check that a broken codec is reported. Arguments: format, source
    // encoding, encoded result; returns the value to check.
    std::function<std::uint32_t(FormatKind, std::uint32_t, std::uint32_t)> encode_fault;
};

struct CheckResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    std::string first_failure; // empty when passing
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool pass() const;
    std::string to_json(int indent = 2) const;
};

// Random single-instruction cases (vl, elements including specials, scales,
// accumulator) compared lane by lane against mxdp_reference.
CheckResult fuzz_vmxdotp(rvv::Op op, unsigned flen, FormatKind elem, std::size_t cases, std::uint64_t seed);

// Exhaustive codec checks, vmxdotp fuzzing against the reference dot product
// and every kernel against its matrix oracle, all from one seed.
VerifyReport verify(const VerifyOptions& opts = {});

} // namespace mx
