#pragma once

#include "mx/exact.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace mx {

enum class FormatKind : std::uint8_t {
    fp8_e5m2,
    fp8_e4m3,
    fp4_e2m1,
    e8m0,
    bf16,
    fp16,
    fp32,
};

inline constexpr std::array<FormatKind, 7> all_formats{
    FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1, FormatKind::e8m0,
    FormatKind::bf16,     FormatKind::fp16,     FormatKind::fp32};

// Static description of a binary format. Layout is sign | exponent | mantissa,
// except E8M0 which has no sign and no mantissa.
struct ElementFormat {
    FormatKind kind;
    int exponent_bits;
    int mantissa_bits;
    int bias;
    bool has_inf;
    bool has_nan;

    int sign_bits() const { return kind == FormatKind::e8m0 ? 0 : 1; }
    int total_bits() const { return sign_bits() + exponent_bits + mantissa_bits; }
    std::uint32_t width_mask() const
    {
        return total_bits() == 32 ? 0xFFFFFFFFu : ((1u << total_bits()) - 1u);
    }
    bool has_subnormals() const { return kind != FormatKind::e8m0; }
    // Largest unbiased exponent of a finite value (emax of the element).
    int emax() const;
    // Bit pattern (sign clear) of the largest finite magnitude.
    std::uint32_t max_finite_bits() const;
    // Canonical quiet NaN with sign clear; only valid when has_nan.
    std::uint32_t canonical_nan() const;
    bool is_element() const
    {
        return kind == FormatKind::fp8_e5m2 || kind == FormatKind::fp8_e4m3 ||
               kind == FormatKind::fp4_e2m1;
    }
    bool is_fp8() const { return kind == FormatKind::fp8_e5m2 || kind == FormatKind::fp8_e4m3; }

    friend bool operator==(const ElementFormat& a, const ElementFormat& b) { return a.kind == b.kind; }
};

const ElementFormat& format_of(FormatKind kind);
std::string_view name(FormatKind kind);
// Accepts "e5m2", "fp8_e5m2", "e4m3", "e2m1", "fp4", "e8m0", "bf16", "fp16", "fp32".
std::optional<FormatKind> parse_format(std::string_view text);

struct EncodedScalar {
    std::uint32_t bits = 0;
    FormatKind format = FormatKind::fp32;

    friend bool operator==(const EncodedScalar&, const EncodedScalar&) = default;
};

// Decoded value: finite (exact), infinite or NaN. Zero keeps its sign.
struct Value {
    enum class Kind : std::uint8_t { finite, inf, nan };

    Kind kind = Kind::finite;
    bool negative = false;
    Exact magnitude; // >= 0, only meaningful when finite

    static Value nan() { return {Kind::nan, false, {}}; }
    static Value inf(bool neg) { return {Kind::inf, neg, {}}; }
    static Value zero(bool neg = false) { return {Kind::finite, neg, {}}; }
    static Value finite(const Exact& signed_value, bool neg_zero = false);
    static Value from_double(double v);

    bool is_nan() const { return kind == Kind::nan; }
    bool is_inf() const { return kind == Kind::inf; }
    bool is_finite() const { return kind == Kind::finite; }
    bool is_zero() const { return is_finite() && magnitude.is_zero(); }
    Exact signed_value() const { return negative ? -magnitude : magnitude; }
    double to_double() const;
};

// IEEE-style exact arithmetic on Values (no rounding). Zero signs follow
// round-to-nearest rules: x + (-x) = +0, (-0) + (-0) = -0.
Value exact_add(const Value& a, const Value& b);
Value exact_mul(const Value& a, const Value& b);

enum class Overflow : std::uint8_t {
    ieee,       // overflow to Inf where the format has one
    saturate,   // clamp to +-max finite, Inf inputs clamp too
};

// Only round-to-nearest-even is provided; stochastic rounding is a non-goal.
enum class Rounding : std::uint8_t { nearest_even };

struct EncodeOptions {
    Rounding rounding = Rounding::nearest_even;
    Overflow overflow = Overflow::ieee;
};

// Exact value of an encoding. Throws Error(encoding) if bits exceed the width.
Value decode(EncodedScalar x);
Value decode(std::uint32_t bits, FormatKind fmt);

// Round a value into a format. Errors: NaN into a NaN-free format,
// Inf into an Inf-free format without saturation, negative values into E8M0.
EncodedScalar encode(const Value& v, FormatKind fmt, EncodeOptions opts = {});
EncodedScalar encode(double v, FormatKind fmt, EncodeOptions opts = {});

// encode(decode(x), dst) with IEEE overflow; NaN propagates as quiet NaN.
EncodedScalar convert(EncodedScalar x, FormatKind dst);

bool is_nan(EncodedScalar x);

// The integer-only E8M0 -> FP32 expansion used by the emulation kernel:
// ((s - 127) + 127) << 23. Throws nan_scale for 0xFF and range for 0x00,
// which would need an FP32 subnormal.
std::uint32_t e8m0_to_fp32_via_integer(std::uint8_t scale_byte);

// Bit-level helpers.
float bits_to_float(std::uint32_t bits);
std::uint32_t float_to_bits(float f);

} // namespace mx
