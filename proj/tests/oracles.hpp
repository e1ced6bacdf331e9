#pragma once

// Test-only oracles. Nothing here calls the library's encode/decode paths:
// values come from the textbook formula, and rounding comes from scanning
// every encoding for the nearest one.

#include "mx/exact.hpp"
#include "mx/format.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace oracle {

struct Layout {
    int e, m, bias;
    bool sign, inf, ieee_nan, e4m3_nan, e8m0;
};

inline Layout layout(mx::FormatKind k)
{
    using mx::FormatKind;
    switch (k) {
    case FormatKind::fp8_e5m2: return {5, 2, 15, true, true, true, false, false};
    case FormatKind::fp8_e4m3: return {4, 3, 7, true, false, false, true, false};
    case FormatKind::fp4_e2m1: return {2, 1, 1, true, false, false, false, false};
    case FormatKind::e8m0: return {8, 0, 127, false, false, false, false, true};
    case FormatKind::bf16: return {8, 7, 127, true, true, true, false, false};
    case FormatKind::fp16: return {5, 10, 15, true, true, true, false, false};
    case FormatKind::fp32: return {8, 23, 127, true, true, true, false, false};
    }
    return {};
}

inline int width(mx::FormatKind k)
{
    const Layout l = layout(k);
    return (l.sign ? 1 : 0) + l.e + l.m;
}

// (-1)^s * 2^(e-bias) * (1 + m/2^mbits), subnormals and specials by hand.
inline double value_of(std::uint32_t bits, mx::FormatKind k)
{
    const Layout l = layout(k);
    if (l.e8m0) {
        return bits == 0xFF ? std::numeric_limits<double>::quiet_NaN() : std::ldexp(1.0, int(bits) - 127);
    }
    const std::uint32_t s = (bits >> (l.e + l.m)) & 1u;
    const std::uint32_t ef = (bits >> l.m) & ((1u << l.e) - 1u);
    const std::uint32_t mf = bits & ((1u << l.m) - 1u);
    const double sign = s ? -1.0 : 1.0;
    if (l.e4m3_nan && ef == 15 && mf == 7) return std::numeric_limits<double>::quiet_NaN();
    if (l.inf && ef == (1u << l.e) - 1u) {
        return mf == 0 ? sign * std::numeric_limits<double>::infinity()
                       : std::numeric_limits<double>::quiet_NaN();
    }
    if (ef == 0) return sign * std::ldexp(double(mf), 1 - l.bias - l.m);
    return sign * std::ldexp(1.0 + std::ldexp(double(mf), -l.m), int(ef) - l.bias);
}

inline double max_finite(mx::FormatKind k)
{
    double best = 0;
    for (std::uint32_t b = 0; b < (1u << std::min(width(k), 16)); ++b) {
        const double v = value_of(b, k);
        if (std::isfinite(v)) best = std::max(best, v);
    }
    return best;
}

// Nearest encoding by full scan, ties to the even code. For formats with an
// infinity the overflow point is modelled by treating Inf as the value
// 2^(emax+1), which is where IEEE rounding sends the overflow. Formats
// without infinity saturate. Only for formats up to 16 bits.
inline std::uint32_t nearest(double v, mx::FormatKind k)
{
    const Layout l = layout(k);
    const int w = width(k);
    const bool neg = std::signbit(v);
    const mx::Exact target = mx::Exact::from_double(std::fabs(v));
    std::optional<mx::Exact> best_d;
    std::uint32_t best = 0;
    const std::uint32_t sign_bit = l.sign ? (1u << (w - 1)) : 0u;
    for (std::uint32_t b = 0; b < (1u << w); ++b) {
        if (b & sign_bit) continue;
        double val = value_of(b, k);
        if (std::isnan(val)) continue;
        if (std::isinf(val)) val = 2.0 * std::ldexp(1.0, int(std::ilogb(max_finite(k))));
        const mx::Exact d = (mx::Exact::from_double(val) - target).abs();
        if (!best_d || d < *best_d || (d == *best_d && (b & 1u) == 0)) {
            best_d = d;
            best = b;
        }
    }
    if (l.e8m0) return best;
    return best | (neg ? sign_bit : 0u);
}

// Same answer as nearest() for the 16-bit formats, via a sorted table of all
// non-negative codes and an exact tie check between the two neighbours.
inline std::uint32_t nearest16(double v, mx::FormatKind k)
{
    using Table = std::vector<std::pair<double, std::uint32_t>>;
    auto build = [](mx::FormatKind f) {
        Table t;
        const std::uint32_t sign_bit = 1u << (width(f) - 1);
        for (std::uint32_t b = 0; b < sign_bit; ++b) {
            const double x = value_of(b, f);
            if (std::isnan(x)) continue;
            t.push_back({std::isinf(x) ? 2.0 * std::ldexp(1.0, std::ilogb(max_finite(f))) : x, b});
        }
        std::sort(t.begin(), t.end());
        return t;
    };
    static const Table fp16 = build(mx::FormatKind::fp16);
    static const Table bf16 = build(mx::FormatKind::bf16);
    const Table& table = k == mx::FormatKind::fp16 ? fp16 : bf16;
    const std::uint32_t sign = std::signbit(v) ? (1u << (width(k) - 1)) : 0u;
    const double a = std::fabs(v);
    auto it = std::lower_bound(table.begin(), table.end(), std::make_pair(a, 0u));
    std::uint32_t best;
    if (it == table.end()) {
        best = table.back().second;
    } else if (it == table.begin() || it->first == a) {
        best = it->second;
    } else {
        const auto below = *(it - 1);
        const mx::Exact d_hi = mx::Exact::from_double(it->first) - mx::Exact::from_double(a);
        const mx::Exact d_lo = mx::Exact::from_double(a) - mx::Exact::from_double(below.first);
        if (d_lo < d_hi) best = below.second;
        else if (d_hi < d_lo) best = it->second;
        else best = (below.second & 1u) == 0 ? below.second : it->second;
    }
    return best | sign;
}

} // namespace oracle
