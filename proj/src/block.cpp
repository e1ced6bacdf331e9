#include "mx/block.hpp"

#include "mx/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mx {

std::uint8_t floor_log2_scale(double amax, const ElementFormat& elem)
{
    if (!(amax > 0.0) || !std::isfinite(amax)) return 127;
    const int e = std::ilogb(amax);
    const int biased = e - elem.emax() + 127;
    return static_cast<std::uint8_t>(std::clamp(biased, 0, 254));
}

Exact scale_value(std::uint8_t scale)
{
    if (scale == 0xFF) throw Error(ErrorCode::nan_scale, "E8M0 scale 0xFF is NaN");
    return Exact::from_int(1, static_cast<int>(scale) - 127);
}

MxBlock quantize_block(std::span<const float> values, FormatKind fmt, const QuantizeOptions& opts)
{
    const ElementFormat& f = format_of(fmt);
    if (!f.is_element()) {
        throw Error(ErrorCode::config, std::string(name(fmt)) + " is not an MX element format");
    }
    if (values.empty()) throw Error(ErrorCode::shape, "block size k must be at least 1");

    double amax = 0.0;
    for (float v : values) {
        if (std::isnan(v)) {
            if (opts.nan_policy == NanPolicy::strict) {
                throw Error(ErrorCode::encoding, "NaN input to quantize_block (strict mode)");
            }
            continue;
        }
        if (std::isinf(v)) continue;
        amax = std::max(amax, static_cast<double>(std::fabs(v)));
    }

    MxBlock b;
    b.format = fmt;
    b.scale = opts.scale_policy(amax, f);
    if (b.scale == 0xFF) throw Error(ErrorCode::range, "scale policy returned the NaN scale");
    const int shift = 127 - static_cast<int>(b.scale);
    const EncodeOptions sat{Rounding::nearest_even, Overflow::saturate};
    b.elements.reserve(values.size());
    for (float v : values) {
        Value x = Value::from_double(v);
        if (x.is_nan()) {
            x = f.has_nan ? Value::nan() : Value{Value::Kind::inf, std::signbit(v), {}};
        } else if (x.is_finite()) {
            x.magnitude = x.magnitude.ldexp(shift);
        }
        b.elements.push_back(static_cast<std::uint8_t>(encode(x, fmt, sat).bits));
    }
    return b;
}

std::vector<float> dequantize_block(const MxBlock& b)
{
    const Exact s = scale_value(b.scale);
    std::vector<float> out;
    out.reserve(b.k());
    for (std::uint8_t e : b.elements) {
        Value v = decode(e, b.format);
        if (v.is_finite()) v.magnitude = v.magnitude * s;
        out.push_back(bits_to_float(encode(v, FormatKind::fp32).bits));
    }
    return out;
}

RefAccumulator::RefAccumulator(FormatKind target) : target_(target), value_(Value::zero()) {}

RefAccumulator::RefAccumulator(FormatKind target, std::uint32_t initial_bits)
    : target_(target), value_(decode(initial_bits, target))
{
}

void RefAccumulator::round_in_place() { value_ = decode(finalize(), target_); }

std::uint32_t RefAccumulator::finalize() const { return encode(value_, target_).bits; }

Value mxdp_exact(std::span<const std::uint8_t> a, std::uint8_t scale_a,
                 std::span<const std::uint8_t> b, std::uint8_t scale_b, FormatKind fmt)
{
    if (a.size() != b.size()) throw Error(ErrorCode::shape, "MX blocks differ in size k");
    if (scale_a == 0xFF || scale_b == 0xFF) return Value::nan();
    Value sum = Value::zero();
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum = exact_add(sum, exact_mul(decode(a[i], fmt), decode(b[i], fmt)));
    }
    if (sum.is_finite()) {
        sum.magnitude = sum.magnitude.ldexp(static_cast<int>(scale_a) + scale_b - 254);
    }
    return sum;
}

Value mxdp_exact(const MxBlock& a, const MxBlock& b)
{
    if (a.format != b.format) throw Error(ErrorCode::shape, "MX blocks differ in element format");
    return mxdp_exact(a.elements, a.scale, b.elements, b.scale, a.format);
}

RefAccumulator& mxdp_reference(const MxBlock& a, const MxBlock& b, RefAccumulator& acc)
{
    // An exactly-zero contribution leaves the accumulator untouched (keeps -0).
    const Value c = mxdp_exact(a, b);
    if (!c.is_zero()) acc.add(c);
    return acc;
}

} // namespace mx
