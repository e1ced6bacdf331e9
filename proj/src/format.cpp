#include "mx/format.hpp"

#include "mx/error.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace mx {

namespace mp = boost::multiprecision;

const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::encoding: return "encoding";
    case ErrorCode::range: return "range";
    case ErrorCode::nan_scale: return "nan_scale";
    case ErrorCode::shape: return "shape";
    case ErrorCode::config: return "config";
    case ErrorCode::illegal_insn: return "illegal_instruction";
    case ErrorCode::memory_fault: return "memory_fault";
    case ErrorCode::parse: return "parse";
    case ErrorCode::io: return "io";
    }
    return "unknown";
}

namespace {

constexpr ElementFormat kFormats[] = {
    {FormatKind::fp8_e5m2, 5, 2, 15, true, true},
    {FormatKind::fp8_e4m3, 4, 3, 7, false, true},
    {FormatKind::fp4_e2m1, 2, 1, 1, false, false},
    {FormatKind::e8m0, 8, 0, 127, false, true},
    {FormatKind::bf16, 8, 7, 127, true, true},
    {FormatKind::fp16, 5, 10, 15, true, true},
    {FormatKind::fp32, 8, 23, 127, true, true},
};

bool ieee_layout(const ElementFormat& f) { return f.has_inf; }

std::uint32_t all_ones_exponent(const ElementFormat& f)
{
    return ((1u << f.exponent_bits) - 1u) << f.mantissa_bits;
}

} // namespace

const ElementFormat& format_of(FormatKind kind) { return kFormats[static_cast<int>(kind)]; }

std::string_view name(FormatKind kind)
{
    switch (kind) {
    case FormatKind::fp8_e5m2: return "e5m2";
    case FormatKind::fp8_e4m3: return "e4m3";
    case FormatKind::fp4_e2m1: return "e2m1";
    case FormatKind::e8m0: return "e8m0";
    case FormatKind::bf16: return "bf16";
    case FormatKind::fp16: return "fp16";
    case FormatKind::fp32: return "fp32";
    }
    return "?";
}

std::optional<FormatKind> parse_format(std::string_view t)
{
    if (t == "e5m2" || t == "fp8_e5m2" || t == "mxfp8_e5m2") return FormatKind::fp8_e5m2;
    if (t == "e4m3" || t == "fp8_e4m3" || t == "mxfp8_e4m3" || t == "fp8") return FormatKind::fp8_e4m3;
    if (t == "e2m1" || t == "fp4_e2m1" || t == "mxfp4" || t == "fp4") return FormatKind::fp4_e2m1;
    if (t == "e8m0") return FormatKind::e8m0;
    if (t == "bf16") return FormatKind::bf16;
    if (t == "fp16") return FormatKind::fp16;
    if (t == "fp32") return FormatKind::fp32;
    return std::nullopt;
}

int ElementFormat::emax() const
{
    switch (kind) {
    case FormatKind::fp8_e4m3: return 15 - bias;
    case FormatKind::fp4_e2m1: return 3 - bias;
    case FormatKind::e8m0: return 254 - bias;
    default: return static_cast<int>((1u << exponent_bits) - 2u) - bias;
    }
}

std::uint32_t ElementFormat::max_finite_bits() const
{
    switch (kind) {
    case FormatKind::fp8_e4m3: return 0x7E;
    case FormatKind::fp4_e2m1: return 0x7;
    case FormatKind::e8m0: return 0xFE;
    default: return all_ones_exponent(*this) - 1u;
    }
}

std::uint32_t ElementFormat::canonical_nan() const
{
    switch (kind) {
    case FormatKind::fp8_e4m3: return 0x7F;
    case FormatKind::e8m0: return 0xFF;
    case FormatKind::fp4_e2m1: throw Error(ErrorCode::encoding, "E2M1 has no NaN encoding");
    default: return all_ones_exponent(*this) | (1u << (mantissa_bits - 1));
    }
}

Value Value::finite(const Exact& v, bool neg_zero)
{
    if (v.is_zero()) return zero(neg_zero);
    return {Kind::finite, v.sign() < 0, v.abs()};
}

Value Value::from_double(double v)
{
    if (std::isnan(v)) return nan();
    if (std::isinf(v)) return inf(v < 0);
    return finite(Exact::from_double(v), std::signbit(v));
}

double Value::to_double() const
{
    switch (kind) {
    case Kind::nan: return std::nan("");
    case Kind::inf: return negative ? -HUGE_VAL : HUGE_VAL;
    case Kind::finite: break;
    }
    const double m = magnitude.to_double();
    return negative ? -m : m;
}

Value exact_add(const Value& a, const Value& b)
{
    if (a.is_nan() || b.is_nan()) return Value::nan();
    if (a.is_inf() && b.is_inf()) return a.negative == b.negative ? a : Value::nan();
    if (a.is_inf()) return a;
    if (b.is_inf()) return b;
    const Exact s = a.signed_value() + b.signed_value();
    const bool neg_zero = a.is_zero() && b.is_zero() && a.negative && b.negative;
    return Value::finite(s, neg_zero);
}

Value exact_mul(const Value& a, const Value& b)
{
    if (a.is_nan() || b.is_nan()) return Value::nan();
    const bool neg = a.negative != b.negative;
    if (a.is_inf() || b.is_inf()) {
        if (a.is_zero() || b.is_zero()) return Value::nan();
        return Value::inf(neg);
    }
    return {Value::Kind::finite, neg, a.magnitude * b.magnitude};
}

Value decode(std::uint32_t bits, FormatKind kind)
{
    const ElementFormat& f = format_of(kind);
    if ((bits & ~f.width_mask()) != 0) {
        throw Error(ErrorCode::encoding, "bits 0x" + std::to_string(bits) + " exceed the " +
                                             std::to_string(f.total_bits()) + "-bit width of " +
                                             std::string(name(kind)));
    }
    if (kind == FormatKind::e8m0) {
        if (bits == 0xFF) return Value::nan();
        return {Value::Kind::finite, false, Exact::from_int(1, static_cast<int>(bits) - f.bias)};
    }
    const int mag_bits = f.exponent_bits + f.mantissa_bits;
    const bool neg = ((bits >> mag_bits) & 1u) != 0;
    const std::uint32_t mag = bits & ((1u << mag_bits) - 1u);
    if (kind == FormatKind::fp8_e4m3 && mag == 0x7F) return Value::nan();
    const std::uint32_t exp_field = mag >> f.mantissa_bits;
    const std::uint32_t man_field = mag & ((1u << f.mantissa_bits) - 1u);
    if (ieee_layout(f) && exp_field == (1u << f.exponent_bits) - 1u) {
        return man_field == 0 ? Value::inf(neg) : Value::nan();
    }
    if (exp_field == 0) {
        return {Value::Kind::finite, neg,
                Exact::from_int(man_field, 1 - f.bias - f.mantissa_bits)};
    }
    const std::int64_t significand = (std::int64_t{1} << f.mantissa_bits) | man_field;
    return {Value::Kind::finite, neg,
            Exact::from_int(significand, static_cast<int>(exp_field) - f.bias - f.mantissa_bits)};
}

Value decode(EncodedScalar x) { return decode(x.bits, x.format); }

namespace {

// round(mag / 2^q) to nearest, ties to even; mag > 0.
std::uint64_t round_scaled(const Exact& mag, int q)
{
    const BigInt& m = mag.mantissa();
    const int x = mag.exponent();
    if (x >= q) return static_cast<std::uint64_t>(m << (x - q));
    const int shift = q - x;
    if (shift > static_cast<int>(mp::msb(m)) + 1) return 0; // below half of one quantum
    BigInt n = m >> shift;
    const BigInt rem = m - (n << shift);
    const BigInt half = BigInt(1) << (shift - 1);
    if (rem > half || (rem == half && (n & 1) != 0)) n += 1;
    return static_cast<std::uint64_t>(n);
}

EncodedScalar encode_e8m0(const Value& v, EncodeOptions opts)
{
    const ElementFormat& f = format_of(FormatKind::e8m0);
    if (v.is_nan()) return {0xFF, FormatKind::e8m0};
    if (v.negative && !v.is_zero()) {
        throw Error(ErrorCode::encoding, "E8M0 cannot encode a negative value");
    }
    if (v.is_inf()) {
        if (opts.overflow == Overflow::saturate) return {0xFE, FormatKind::e8m0};
        throw Error(ErrorCode::encoding, "E8M0 has no infinity");
    }
    if (v.is_zero()) return {0x00, FormatKind::e8m0};
    const int e = *v.magnitude.floor_log2();
    int code = e + f.bias;
    if (!v.magnitude.is_power_of_two()) {
        // compare with the midpoint 1.5 * 2^e
        const int c = compare(v.magnitude, Exact::from_int(3, e - 1));
        if (c > 0 || (c == 0 && (code & 1) != 0)) ++code;
    }
    if (code < 0) code = 0;
    if (code > 0xFE) code = 0xFE;
    return {static_cast<std::uint32_t>(code), FormatKind::e8m0};
}

} // namespace

EncodedScalar encode(const Value& v, FormatKind kind, EncodeOptions opts)
{
    if (kind == FormatKind::e8m0) return encode_e8m0(v, opts);
    const ElementFormat& f = format_of(kind);
    const int mag_bits = f.exponent_bits + f.mantissa_bits;
    const std::uint32_t sign = v.negative ? (1u << mag_bits) : 0u;

    if (v.is_nan()) {
        if (!f.has_nan) throw Error(ErrorCode::encoding, std::string(name(kind)) + " cannot encode NaN");
        return {sign | f.canonical_nan(), kind};
    }
    if (v.is_inf()) {
        if (opts.overflow == Overflow::saturate) return {sign | f.max_finite_bits(), kind};
        if (f.has_inf) return {sign | all_ones_exponent(f), kind};
        throw Error(ErrorCode::encoding,
                    std::string(name(kind)) + " has no infinity; use saturating mode");
    }
    if (v.is_zero()) return {sign, kind};

    const int emin = 1 - f.bias;
    const int e = *v.magnitude.floor_log2();
    auto overflow = [&]() -> EncodedScalar {
        if (f.has_inf && opts.overflow == Overflow::ieee) return {sign | all_ones_exponent(f), kind};
        return {sign | f.max_finite_bits(), kind};
    };
    if (e > f.emax() + 1) return overflow();
    const int e_eff = std::max(e, emin);
    const int q = e_eff - f.mantissa_bits;
    const std::uint64_t n = round_scaled(v.magnitude, q);
    const std::uint64_t code =
        (static_cast<std::uint64_t>(e_eff - emin) << f.mantissa_bits) + n;
    if (code > f.max_finite_bits()) return overflow();
    return {sign | static_cast<std::uint32_t>(code), kind};
}

EncodedScalar encode(double v, FormatKind fmt, EncodeOptions opts)
{
    return encode(Value::from_double(v), fmt, opts);
}

EncodedScalar convert(EncodedScalar x, FormatKind dst)
{
    return encode(decode(x), dst, {Rounding::nearest_even, Overflow::ieee});
}

bool is_nan(EncodedScalar x) { return decode(x).is_nan(); }

std::uint32_t e8m0_to_fp32_via_integer(std::uint8_t scale_byte)
{
    if (scale_byte == 0xFF) throw Error(ErrorCode::nan_scale, "E8M0 scale 0xFF is NaN");
    const int unbiased = static_cast<int>(scale_byte) - 127; // remove bias
    const int field = unbiased + 127;                         // FP32 re-bias
    if (field <= 0 || field >= 255) {
        throw Error(ErrorCode::range, "E8M0 scale " + std::to_string(scale_byte) +
                                          " has no normal FP32 encoding");
    }
    return static_cast<std::uint32_t>(field) << 23;
}

float bits_to_float(std::uint32_t bits) { return std::bit_cast<float>(bits); }
std::uint32_t float_to_bits(float f) { return std::bit_cast<std::uint32_t>(f); }

} // namespace mx
