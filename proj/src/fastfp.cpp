#include "fastfp.hpp"

#include "mx/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <vector>

namespace mx::detail {

namespace {

std::vector<double> build_table(FormatKind fmt)
{
    const std::uint32_t count = 1u << format_of(fmt).total_bits();
    std::vector<double> t(count);
    for (std::uint32_t b = 0; b < count; ++b) {
        const Value v = decode(b, fmt);
        t[b] = v.is_nan() ? std::numeric_limits<double>::quiet_NaN() : v.to_double();
    }
    return t;
}

const std::vector<double>& table(FormatKind fmt)
{
    static const std::array<std::vector<double>, 6> tables{
        build_table(FormatKind::fp8_e5m2), build_table(FormatKind::fp8_e4m3),
        build_table(FormatKind::fp4_e2m1), build_table(FormatKind::e8m0),
        build_table(FormatKind::bf16),     build_table(FormatKind::fp16)};
    return tables.at(static_cast<std::size_t>(fmt));
}

bool fast_target(FormatKind fmt)
{
    return fmt == FormatKind::fp32 || fmt == FormatKind::bf16 || fmt == FormatKind::fp16;
}

} // namespace

double fast_decode(std::uint32_t bits, FormatKind fmt)
{
    if (fmt == FormatKind::fp32) return static_cast<double>(std::bit_cast<float>(bits));
    const auto& t = table(fmt);
    if (bits >= t.size()) throw Error(ErrorCode::encoding, "encoding exceeds format width");
    return t[bits];
}

std::uint32_t fast_encode(double v, FormatKind fmt)
{
    if (!fast_target(fmt)) return encode(Value::from_double(v), fmt).bits;
    const ElementFormat& f = format_of(fmt);
    if (std::isnan(v)) return f.canonical_nan();
    const int m = f.mantissa_bits;
    const std::uint32_t sign = std::signbit(v) ? (1u << (f.total_bits() - 1)) : 0u;
    const std::uint32_t inf_bits = ((1u << f.exponent_bits) - 1u) << m;
    const double mag = std::fabs(v);
    if (std::isinf(mag)) return sign | inf_bits;
    if (mag == 0.0) return sign;
    const int emin = 1 - f.bias;
    const int emax = f.bias;
    const int e = std::ilogb(mag);
    if (e > emax + 1) return sign | inf_bits;
    const int e_eff = std::max(e, emin);
    const double n = std::nearbyint(std::ldexp(mag, m - e_eff)); // scaling is exact; one RNE step
    const std::uint64_t code = (static_cast<std::uint64_t>(e_eff - emin) << m) + static_cast<std::uint64_t>(n);
    if (code >= inf_bits) return sign | inf_bits;
    return sign | static_cast<std::uint32_t>(code);
}

double add_round_odd(double a, double b)
{
    double s = a + b;
    if (!std::isfinite(s)) return s;
    // TwoSum error term
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    if (err != 0.0 && (std::bit_cast<std::uint64_t>(s) & 1u) == 0) {
        s = std::nextafter(s, err > 0 ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity());
    }
    return s;
}

std::uint32_t fused_sum(double a, double b, FormatKind fmt)
{
    return fast_encode(add_round_odd(a, b), fmt);
}

std::uint32_t fused_sum3(double a, double b, double c, FormatKind fmt)
{
    const double s = a + b;
    if (std::isfinite(s)) {
        const double bb = s - a;
        const double err = (a - (s - bb)) + (b - bb);
        if (err == 0.0) return fused_sum(s, c, fmt);
    } else {
        return fast_encode(s + c, fmt);
    }
    const Value exact = exact_add(exact_add(Value::from_double(a), Value::from_double(b)), Value::from_double(c));
    return encode(exact, fmt).bits;
}

} // namespace mx::detail
