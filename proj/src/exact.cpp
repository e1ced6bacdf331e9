#include "mx/exact.hpp"

#include <cmath>
#include <limits>

namespace mx {

namespace mp = boost::multiprecision;

Exact::Exact(BigInt mant, int exp) : mant_(std::move(mant)), exp_(exp) { normalize(); }

void Exact::normalize()
{
    if (mant_.is_zero()) {
        exp_ = 0;
        return;
    }
    const auto tz = static_cast<int>(mp::lsb(mp::abs(mant_)));
    if (tz > 0) {
        mant_ >>= tz;
        exp_ += tz;
    }
}

Exact Exact::from_double(double v)
{
    if (v == 0.0) return {};
    int e = 0;
    const double frac = std::frexp(v, &e); // v = frac * 2^e, 0.5 <= |frac| < 1
    const auto m = static_cast<std::int64_t>(std::ldexp(frac, 53));
    return Exact(BigInt(m), e - 53);
}

std::optional<int> Exact::floor_log2() const
{
    if (mant_.is_zero()) return std::nullopt;
    return static_cast<int>(mp::msb(mp::abs(mant_))) + exp_;
}

bool Exact::is_power_of_two() const
{
    // normalized: odd mantissa, so a power of two has |mant| == 1
    return mant_ == 1 || mant_ == -1;
}

Exact operator+(const Exact& a, const Exact& b)
{
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.exp_ == b.exp_) return Exact(a.mant_ + b.mant_, a.exp_);
    if (a.exp_ > b.exp_) return Exact((a.mant_ << (a.exp_ - b.exp_)) + b.mant_, b.exp_);
    return Exact(a.mant_ + (b.mant_ << (b.exp_ - a.exp_)), a.exp_);
}

Exact operator*(const Exact& a, const Exact& b)
{
    if (a.is_zero() || b.is_zero()) return {};
    return Exact(a.mant_ * b.mant_, a.exp_ + b.exp_);
}

int compare(const Exact& a, const Exact& b)
{
    const Exact d = a - b;
    return d.sign();
}

double Exact::to_double() const
{
    if (mant_.is_zero()) return 0.0;
    const bool neg = mant_.sign() < 0;
    BigInt m = mp::abs(mant_);
    int e = exp_;
    const int bits = static_cast<int>(mp::msb(m)) + 1;
    const int top = e + bits - 1; // floor(log2)
    // quantum exponent for binary64 (53-bit significand, emin = -1022)
    int q = std::max(top, -1022) - 52;
    double out;
    if (q <= e) {
        // exactly representable mantissa width
        out = std::ldexp(static_cast<double>(static_cast<std::uint64_t>(m)), e);
    } else {
        const int shift = q - e;
        BigInt n = m >> shift;
        const BigInt rem = m - (n << shift);
        const BigInt half = BigInt(1) << (shift - 1);
        if (rem > half || (rem == half && (n & 1) != 0)) n += 1;
        out = std::ldexp(static_cast<double>(static_cast<std::uint64_t>(n)), q);
    }
    if (!std::isfinite(out)) out = std::numeric_limits<double>::infinity();
    return neg ? -out : out;
}

std::string Exact::to_string() const
{
    return mant_.str() + "*2^" + std::to_string(exp_);
}

} // namespace mx
