#include "quantum_dot.hpp"

#include "mx/error.hpp"

namespace mx::detail {

namespace {

QuantumTable build(FormatKind fmt)
{
    const ElementFormat& f = format_of(fmt);
    QuantumTable t;
    t.quantum_exp = 1 - f.bias - f.mantissa_bits;
    const std::uint32_t count = 1u << f.total_bits();
    for (std::uint32_t bits = 0; bits < 256; ++bits) {
        if (bits >= count) {
            t.special[bits] = 3;
            continue;
        }
        const Value v = decode(bits, fmt);
        if (v.is_nan()) {
            t.special[bits] = 3;
        } else if (v.is_inf()) {
            t.special[bits] = v.negative ? 2 : 1;
        } else {
            const Exact units = v.signed_value().ldexp(-t.quantum_exp);
            // exponent >= 0 after scaling by the quantum
            t.units[bits] = static_cast<std::int64_t>(units.mantissa() << units.exponent());
        }
    }
    return t;
}

} // namespace

const QuantumTable& quantum_table(FormatKind fmt)
{
    static const QuantumTable e5m2 = build(FormatKind::fp8_e5m2);
    static const QuantumTable e4m3 = build(FormatKind::fp8_e4m3);
    static const QuantumTable e2m1 = build(FormatKind::fp4_e2m1);
    switch (fmt) {
    case FormatKind::fp8_e5m2: return e5m2;
    case FormatKind::fp8_e4m3: return e4m3;
    case FormatKind::fp4_e2m1: return e2m1;
    default: break;
    }
    throw Error(ErrorCode::config, "quantum table requested for a non-element format");
}

} // namespace mx::detail
