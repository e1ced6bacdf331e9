#pragma once

#include <stdexcept>
#include <string>

namespace mx {

enum class ErrorCode {
    encoding,     // value cannot be represented / bits out of width
    range,        // result outside the representable range of an integer trick
    nan_scale,    // E8M0 scale is NaN
    shape,        // matrix / block shape mismatch
    config,       // invalid kernel or machine configuration
    illegal_insn, // illegal vtype / register group / operand combination
    memory_fault, // out-of-bounds simulated memory access
    parse,        // program text or JSON parse failure
    io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace mx
