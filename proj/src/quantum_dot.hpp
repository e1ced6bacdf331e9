#pragma once

// Integer fast path for sums of element products. Every finite value of an
// MX element format is an integer multiple of the format's smallest
// subnormal, so a k-term dot product is an exact 128-bit integer sum scaled
// by 2^(2 * quantum_exponent).

#include "mx/format.hpp"

#include <array>
#include <cstdint>

namespace mx::detail {

struct QuantumTable {
    int quantum_exp = 0;                // log2 of the smallest subnormal
    std::array<std::int64_t, 256> units{}; // signed multiple of the quantum
    std::array<std::uint8_t, 256> special{}; // 0 finite, 1 +inf, 2 -inf, 3 nan
};

const QuantumTable& quantum_table(FormatKind element_format);

struct QuantumSum {
    __int128 units = 0;
    bool pos_inf = false;
    bool neg_inf = false;
    bool nan = false;

    void add_product(const QuantumTable& t, std::uint8_t a, std::uint8_t b)
    {
        const std::uint8_t sa = t.special[a];
        const std::uint8_t sb = t.special[b];
        if (sa == 0 && sb == 0) {
            units += static_cast<__int128>(t.units[a]) * t.units[b];
            return;
        }
        if (sa == 3 || sb == 3) {
            nan = true;
            return;
        }
        // at least one infinity
        const bool a_zero = sa == 0 && t.units[a] == 0;
        const bool b_zero = sb == 0 && t.units[b] == 0;
        if (a_zero || b_zero) {
            nan = true;
            return;
        }
        const bool neg_a = sa == 0 ? t.units[a] < 0 : sa == 2;
        const bool neg_b = sb == 0 ? t.units[b] < 0 : sb == 2;
        (neg_a != neg_b ? neg_inf : pos_inf) = true;
    }

    // Value of the sum times 2^extra_exp. A zero sum is +0.
    Value value(int quantum_exp, int extra_exp) const
    {
        if (nan || (pos_inf && neg_inf)) return Value::nan();
        if (pos_inf) return Value::inf(false);
        if (neg_inf) return Value::inf(true);
        return Value::finite(Exact(BigInt(units), 2 * quantum_exp + extra_exp));
    }
};

} // namespace mx::detail
