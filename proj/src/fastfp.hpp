#pragma once

// Double-precision shortcuts for the simulator's FP instructions. Products of
// formats up to 16 bits are exact in binary64; a sum is first rounded to odd
// in binary64 and then once to the target, which equals a single rounding of
// the exact sum whenever the target has at most 25 significand bits.

#include "mx/format.hpp"

#include <cstdint>

namespace mx::detail {

// Exact value of an encoding as a double (NaN decodes to a quiet NaN).
double fast_decode(std::uint32_t bits, FormatKind fmt);

// Round-to-nearest-even into fmt with the same overflow and NaN behaviour as
// encode(Value, fmt) with default options.
std::uint32_t fast_encode(double v, FormatKind fmt);

// a + b rounded to odd (IEEE specials pass through).
double add_round_odd(double a, double b);

// round(a + b) into fmt with one rounding; a and b are exact doubles.
std::uint32_t fused_sum(double a, double b, FormatKind fmt);

// round(a + b + c) into fmt with one rounding.
std::uint32_t fused_sum3(double a, double b, double c, FormatKind fmt);

} // namespace mx::detail
