#include "doctest.h"
#include "oracles.hpp"

#include "mx/error.hpp"
#include "mx/format.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace mx;

namespace {

bool same_value(double a, double b)
{
    if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
    return a == b && std::signbit(a) == std::signbit(b);
}

constexpr FormatKind kSmall[] = {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1,
                                 FormatKind::e8m0};

} // namespace

TEST_CASE("format table invariants")
{
    for (FormatKind k : all_formats) {
        const ElementFormat& f = format_of(k);
        CHECK(f.total_bits() == oracle::width(k));
    }
    CHECK(format_of(FormatKind::fp8_e5m2).has_inf);
    CHECK_FALSE(format_of(FormatKind::fp8_e4m3).has_inf);
    CHECK(format_of(FormatKind::fp8_e4m3).has_nan);
    CHECK_FALSE(format_of(FormatKind::fp4_e2m1).has_nan);
    CHECK(format_of(FormatKind::e8m0).sign_bits() == 0);
    CHECK(format_of(FormatKind::fp8_e4m3).emax() == 8);
    CHECK(format_of(FormatKind::fp4_e2m1).emax() == 2);
    CHECK(format_of(FormatKind::fp8_e5m2).emax() == 15);
}

TEST_CASE("decode examples")
{
    CHECK(decode(127, FormatKind::e8m0).to_double() == 1.0);
    CHECK(decode(0x0, FormatKind::fp4_e2m1).to_double() == 0.0);
    CHECK_FALSE(std::signbit(decode(0x0, FormatKind::fp4_e2m1).to_double()));
    CHECK(decode(0x38, FormatKind::fp8_e4m3).to_double() == 1.0);
    CHECK(decode(0x7C, FormatKind::fp8_e5m2).is_inf());
    CHECK(decode(0x7, FormatKind::fp4_e2m1).to_double() == 6.0);
    CHECK(decode(0x00, FormatKind::e8m0).to_double() == std::ldexp(1.0, -127));
    CHECK(decode(0xFF, FormatKind::e8m0).is_nan());
    CHECK(decode(0x7F, FormatKind::fp8_e4m3).is_nan());
    CHECK(decode(0xFF, FormatKind::fp8_e4m3).is_nan());
    CHECK(decode(0x7E, FormatKind::fp8_e4m3).to_double() == 448.0);
    CHECK(decode(0x7B, FormatKind::fp8_e5m2).to_double() == 57344.0);
}

TEST_CASE("decode matches the formula oracle on every small encoding")
{
    for (FormatKind k : kSmall) {
        for (std::uint32_t b = 0; b < (1u << oracle::width(k)); ++b) {
            INFO(name(k), " bits=", b);
            CHECK(same_value(decode(b, k).to_double(), oracle::value_of(b, k)));
        }
    }
    // 16-bit formats exhaustively too; FP32 on a sample.
    for (FormatKind k : {FormatKind::fp16, FormatKind::bf16}) {
        for (std::uint32_t b = 0; b < 65536; ++b) {
            REQUIRE(same_value(decode(b, k).to_double(), oracle::value_of(b, k)));
        }
    }
    std::mt19937 rng(7);
    for (int i = 0; i < 20000; ++i) {
        const std::uint32_t b = rng();
        REQUIRE(same_value(decode(b, FormatKind::fp32).to_double(), double(bits_to_float(b))));
    }
}

TEST_CASE("decode rejects bits outside the format width")
{
    CHECK_THROWS_AS(decode(0x10, FormatKind::fp4_e2m1), Error);
    CHECK_THROWS_AS(decode(0x100, FormatKind::fp8_e4m3), Error);
    try {
        decode(0x1FFFF, FormatKind::bf16);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::encoding);
    }
}

TEST_CASE("encode examples")
{
    CHECK(encode(1.0, FormatKind::fp8_e4m3).bits == 0x38);
    for (FormatKind k : all_formats) CHECK(encode(0.0, k).bits == 0);
    CHECK(encode(std::ldexp(1.0, 200), FormatKind::fp8_e5m2).bits == 0x7C);
    CHECK(encode(-0.0, FormatKind::fp8_e4m3).bits == 0x80);
    CHECK(encode(-0.0, FormatKind::fp4_e2m1).bits == 0x8);
    // Inf-free formats saturate on finite overflow regardless of mode.
    CHECK(encode(1e6, FormatKind::fp8_e4m3).bits == 0x7E);
    CHECK(encode(-1e6, FormatKind::fp4_e2m1).bits == 0xF);
    CHECK(encode(1e6, FormatKind::fp8_e5m2, {Rounding::nearest_even, Overflow::saturate}).bits == 0x7B);
    // E5M2 max normal 57344, next step 65536 is Inf: the midpoint 61440 ties to even (Inf).
    CHECK(encode(61440.0, FormatKind::fp8_e5m2).bits == 0x7C);
    CHECK(encode(61439.0, FormatKind::fp8_e5m2).bits == 0x7B);
}

TEST_CASE("encode specials and errors")
{
    const double inf = HUGE_VAL;
    CHECK_THROWS_AS(encode(std::nan(""), FormatKind::fp4_e2m1), Error);
    CHECK_THROWS_AS(encode(inf, FormatKind::fp8_e4m3), Error);
    CHECK(encode(inf, FormatKind::fp8_e4m3, {Rounding::nearest_even, Overflow::saturate}).bits == 0x7E);
    CHECK(encode(-inf, FormatKind::fp8_e4m3, {Rounding::nearest_even, Overflow::saturate}).bits == 0xFE);
    CHECK(encode(inf, FormatKind::fp8_e5m2).bits == 0x7C);
    CHECK(encode(std::nan(""), FormatKind::fp8_e4m3).bits == 0x7F);
    CHECK(encode(std::nan(""), FormatKind::fp16).bits == 0x7E00);
    CHECK(encode(std::nan(""), FormatKind::bf16).bits == 0x7FC0);
    CHECK(encode(std::nan(""), FormatKind::e8m0).bits == 0xFF);
    CHECK_THROWS_AS(encode(-2.0, FormatKind::e8m0), Error);
    CHECK(encode(3.0, FormatKind::e8m0).bits == 128); // tie 2 vs 4 -> even code 128
    CHECK(encode(5.0, FormatKind::e8m0).bits == 129);
    CHECK(encode(1e-60, FormatKind::e8m0).bits == 0);
    CHECK(encode(1e60, FormatKind::e8m0).bits == 0xFE);
}

TEST_CASE("codec round trip is the identity on every small encoding")
{
    for (FormatKind k : kSmall) {
        for (std::uint32_t b = 0; b < (1u << oracle::width(k)); ++b) {
            const Value v = decode(b, k);
            const Value back = decode(encode(v, k));
            INFO(name(k), " bits=", b);
            CHECK(same_value(v.to_double(), back.to_double()));
            if (!v.is_nan()) CHECK(encode(v, k).bits == b);
        }
    }
}

TEST_CASE("monotonic: magnitude order of encodings matches value order")
{
    for (FormatKind k : kSmall) {
        const ElementFormat& f = format_of(k);
        double prev = -1.0;
        for (std::uint32_t b = 0; b <= f.max_finite_bits(); ++b) {
            const double v = decode(b, k).to_double();
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("RNE agrees with the brute-force nearest oracle on random values")
{
    std::mt19937_64 rng(20240611);
    for (FormatKind k : kSmall) {
        const double top = oracle::max_finite(k);
        const int hi = std::ilogb(top) + 2;
        const int lo = k == FormatKind::e8m0 ? -130 : std::ilogb(oracle::value_of(1, k)) - 3;
        std::uniform_int_distribution<int> ex(lo, hi);
        std::uniform_real_distribution<double> frac(1.0, 2.0);
        const int samples = k == FormatKind::e8m0 ? 400 : 4000;
        for (int i = 0; i < samples; ++i) {
            double v = std::ldexp(frac(rng), ex(rng));
            if (k != FormatKind::e8m0 && (rng() & 1)) v = -v;
            INFO(name(k), " v=", v);
            REQUIRE(encode(v, k).bits == oracle::nearest(v, k));
        }
        // exact midpoints between neighbours
        for (std::uint32_t b = 0; b < format_of(k).max_finite_bits(); ++b) {
            const double mid = 0.5 * (oracle::value_of(b, k) + oracle::value_of(b + 1, k));
            REQUIRE(encode(mid, k).bits == oracle::nearest(mid, k));
        }
    }
}

TEST_CASE("RNE for 16-bit formats against a sorted-table nearest search")
{
    std::mt19937_64 rng(99);
    for (FormatKind k : {FormatKind::fp16, FormatKind::bf16}) {
        std::uniform_real_distribution<double> frac(1.0, 2.0);
        std::uniform_int_distribution<int> ex(k == FormatKind::fp16 ? -27 : -135, k == FormatKind::fp16 ? 16 : 128);
        for (int i = 0; i < 100000; ++i) {
            const double v = std::ldexp(frac(rng), ex(rng));
            const std::uint32_t want = oracle::nearest16(v, k);
            REQUIRE(encode(v, k).bits == want);
        }
    }
}

TEST_CASE("FP32 rounding agrees with the hardware double->float conversion")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> frac(1.0, 2.0);
    std::uniform_int_distribution<int> ex(-160, 130);
    for (int i = 0; i < 100000; ++i) {
        const double v = std::ldexp(frac(rng), ex(rng)) * ((rng() & 1) ? -1 : 1);
        REQUIRE(encode(v, FormatKind::fp32).bits == float_to_bits(static_cast<float>(v)));
    }
}

TEST_CASE("convert: FP8 -> FP16 examples and exact widening")
{
    CHECK(convert({0x38, FormatKind::fp8_e4m3}, FormatKind::fp16).bits == 0x3C00);
    CHECK(is_nan(convert({0x7F, FormatKind::fp8_e4m3}, FormatKind::fp16)));
    CHECK(convert({0x7F, FormatKind::fp8_e4m3}, FormatKind::fp16).bits == 0x7E00);
    for (FormatKind src : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1}) {
        for (FormatKind dst : {FormatKind::fp16, FormatKind::bf16, FormatKind::fp32}) {
            for (std::uint32_t b = 0; b < (1u << oracle::width(src)); ++b) {
                const double want = oracle::value_of(b, src);
                const EncodedScalar wide = convert({b, src}, dst);
                CHECK(same_value(oracle::value_of(wide.bits, dst), want));
            }
        }
    }
    // E4M3 -> FP16 -> E4M3 is the identity on every non-NaN byte
    for (std::uint32_t b = 0; b < 256; ++b) {
        if (b == 0x7F || b == 0xFF) continue;
        const EncodedScalar h = convert({b, FormatKind::fp8_e4m3}, FormatKind::fp16);
        CHECK(convert(h, FormatKind::fp8_e4m3).bits == b);
    }
}

TEST_CASE("e8m0_to_fp32_via_integer")
{
    CHECK(e8m0_to_fp32_via_integer(127) == 0x3F800000u);
    CHECK(e8m0_to_fp32_via_integer(130) == 0x41000000u);
    CHECK(e8m0_to_fp32_via_integer(1) == 0x00800000u);
    for (int s = 1; s < 255; ++s) {
        CHECK(e8m0_to_fp32_via_integer(static_cast<std::uint8_t>(s)) ==
              encode(std::ldexp(1.0, s - 127), FormatKind::fp32).bits);
    }
    try {
        e8m0_to_fp32_via_integer(0xFF);
        FAIL("expected nan_scale");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::nan_scale);
    }
    try {
        e8m0_to_fp32_via_integer(0);
        FAIL("expected range");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::range);
    }
}

TEST_CASE("exact arithmetic keeps IEEE zero signs")
{
    const Value pz = Value::zero(false), nz = Value::zero(true);
    CHECK(exact_add(nz, nz).negative);
    CHECK_FALSE(exact_add(pz, nz).negative);
    CHECK_FALSE(exact_add(Value::from_double(3), Value::from_double(-3)).negative);
    CHECK(exact_mul(Value::inf(false), pz).is_nan());
    CHECK(exact_add(Value::inf(false), Value::inf(true)).is_nan());
    CHECK(exact_mul(Value::from_double(-2), pz).negative);
}
