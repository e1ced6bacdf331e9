#pragma once

#include "mx/format.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mx {

// k elements of one element format sharing an E8M0 scale.
struct MxBlock {
    std::uint8_t scale = 127;
    FormatKind format = FormatKind::fp8_e4m3;
    std::vector<std::uint8_t> elements; // one encoding per entry (FP4 in the low nibble)

    std::size_t k() const { return elements.size(); }
};

// Chooses the shared scale byte from the largest magnitude in a block.
// The default is floor(log2(amax)) - emax_elem + 127, clamped to [0, 254].
using ScalePolicy = std::function<std::uint8_t(double amax, const ElementFormat& elem)>;
std::uint8_t floor_log2_scale(double amax, const ElementFormat& elem);

enum class NanPolicy : std::uint8_t {
    strict,     // NaN input is an error
    permissive, // NaN element where the format has one, max-normal otherwise
};

struct QuantizeOptions {
    NanPolicy nan_policy = NanPolicy::strict;
    ScalePolicy scale_policy = floor_log2_scale;
};

MxBlock quantize_block(std::span<const float> values, FormatKind fmt, const QuantizeOptions& opts = {});
std::vector<float> dequantize_block(const MxBlock& b);

// Running accumulator for the MX dot product: holds an exact value and the
// format it finalizes into. round_in_place() models one hardware rounding.
class RefAccumulator {
public:
    explicit RefAccumulator(FormatKind target = FormatKind::fp32);
    RefAccumulator(FormatKind target, std::uint32_t initial_bits);

    FormatKind target() const { return target_; }
    const Value& value() const { return value_; }

    void add(const Value& v) { value_ = exact_add(value_, v); }
    void round_in_place();
    // Round once into the target format (IEEE overflow).
    std::uint32_t finalize() const;

private:
    FormatKind target_;
    Value value_;
};

// Exact scaled dot product 2^(sA+sB-254) * sum_i P_i(A) * P_i(B) as a Value.
// NaN scales or NaN elements give NaN.
Value mxdp_exact(const MxBlock& a, const MxBlock& b);
Value mxdp_exact(std::span<const std::uint8_t> a, std::uint8_t scale_a,
                 std::span<const std::uint8_t> b, std::uint8_t scale_b, FormatKind fmt);

// acc += Dot(A, B) computed exactly (no rounding until finalize()).
RefAccumulator& mxdp_reference(const MxBlock& a, const MxBlock& b, RefAccumulator& acc);

// Integer value of a scale byte as an Exact power of two. Throws nan_scale on 0xFF.
Exact scale_value(std::uint8_t scale);

} // namespace mx
