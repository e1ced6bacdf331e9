#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace mx {

using BigInt = boost::multiprecision::cpp_int;

// Finite dyadic rational mant * 2^exp, held exactly. Every value that any
// binary floating-point format (and any finite sum or product of them) can
// produce is of this form, so all reference arithmetic is done here and
// rounded exactly once where the semantics demand it.
class Exact {
public:
    Exact() = default;
    Exact(BigInt mant, int exp);
    static Exact from_int(std::int64_t v, int exp = 0) { return Exact(BigInt(v), exp); }
    // Exact conversion; the argument must be finite.
    static Exact from_double(double v);

    const BigInt& mantissa() const { return mant_; }
    int exponent() const { return exp_; }

    bool is_zero() const { return mant_.is_zero(); }
    int sign() const { return mant_.sign(); }
    Exact abs() const { return Exact(boost::multiprecision::abs(mant_), exp_); }

    // floor(log2 |x|); nullopt for zero.
    std::optional<int> floor_log2() const;
    bool is_power_of_two() const;

    // Correctly rounded (RNE) conversion; saturates to +-inf outside binary64.
    double to_double() const;
    std::string to_string() const;

    Exact operator-() const { return Exact(-mant_, exp_); }
    friend Exact operator+(const Exact& a, const Exact& b);
    friend Exact operator-(const Exact& a, const Exact& b) { return a + (-b); }
    friend Exact operator*(const Exact& a, const Exact& b);
    Exact& operator+=(const Exact& o) { return *this = *this + o; }
    Exact& operator*=(const Exact& o) { return *this = *this * o; }

    // Multiply by 2^k exactly.
    Exact ldexp(int k) const { return Exact(mant_, exp_ + k); }

    friend int compare(const Exact& a, const Exact& b);
    friend bool operator==(const Exact& a, const Exact& b) { return compare(a, b) == 0; }
    friend bool operator<(const Exact& a, const Exact& b) { return compare(a, b) < 0; }
    friend bool operator>(const Exact& a, const Exact& b) { return compare(a, b) > 0; }
    friend bool operator<=(const Exact& a, const Exact& b) { return compare(a, b) <= 0; }

private:
    void normalize();

    BigInt mant_ = 0;
    int exp_ = 0;
};

} // namespace mx
