#include "doctest.h"

#include "mx/error.hpp"
#include "mx/synth.hpp"
#include "mx/tensor_io.hpp"
#include "mx/verify.hpp"

#include <sstream>

using namespace mx;

namespace {

template <typename M>
Tensor round_trip(const M& m)
{
    std::stringstream ss;
    write_tensor(ss, m);
    return read_tensor(ss);
}

} // namespace

TEST_CASE("MXT1 round trips")
{
    const auto d = synth_lognormal(6, 64, {0.0, 1.0, 3});
    for (auto fmt : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1}) {
        for (auto axis : {BlockAxis::along_cols, BlockAxis::along_rows}) {
            const auto src = axis == BlockAxis::along_cols ? d : synth_lognormal(64, 6, {0.0, 1.0, 4});
            const auto m = quantize_matrix(src, fmt, 32, axis);
            const auto back = std::get<MxMatrix>(round_trip(m));
            CHECK(back.rows() == m.rows());
            CHECK(back.cols() == m.cols());
            CHECK(back.k() == 32);
            CHECK(back.axis() == axis);
            CHECK(back.format() == fmt);
            CHECK(back.elements() == m.elements());
            CHECK(back.scales() == m.scales());
        }
    }
    for (auto fmt : {FormatKind::fp32, FormatKind::bf16, FormatKind::fp16}) {
        const auto x = d.converted(fmt);
        const auto back = std::get<DenseMatrix>(round_trip(x));
        CHECK(back.format == fmt);
        CHECK(back.bits == x.bits);
    }
}

TEST_CASE("MXT1 byte layout")
{
    MxMatrix m(1, 4, 2, BlockAxis::along_cols, FormatKind::fp4_e2m1);
    m.set_element(0, 0, 0x1);
    m.set_element(0, 1, 0x2);
    m.set_element(0, 2, 0x3);
    m.set_element(0, 3, 0xF);
    m.set_scale(0, 0, 127);
    m.set_scale(0, 1, 130);
    std::stringstream ss;
    write_tensor(ss, m);
    const std::string s = ss.str();
    const std::string expect{'M', 'X', 'T', '1', 2, 2, 0, 0, 1, 0, 0, 0, 4, 0, 0, 0,
                             0x21, static_cast<char>(0xF3), 127, static_cast<char>(130)};
    CHECK(s == expect);

    DenseMatrix d(1, 1, FormatKind::fp32);
    d.bits[0] = 0x3F800000;
    std::stringstream ds;
    write_tensor(ds, d);
    const std::string t = ds.str();
    CHECK(t.size() == 20);
    CHECK(t[4] == 3);
    CHECK(t[5] == 0);
    CHECK(static_cast<unsigned char>(t[18]) == 0x80);
    CHECK(static_cast<unsigned char>(t[19]) == 0x3F);
}

TEST_CASE("MXT1 errors")
{
    std::stringstream bad("MXT2\x01\x20");
    CHECK_THROWS_AS(read_tensor(bad), Error);
    std::stringstream code(std::string("MXT1\x09\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00", 16));
    try {
        read_tensor(code);
        FAIL("bad format code accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::encoding);
    }
    MxMatrix m(2, 32, 32, BlockAxis::along_cols, FormatKind::fp8_e4m3);
    std::stringstream ss;
    write_tensor(ss, m);
    std::string cut = ss.str();
    cut.pop_back();
    std::stringstream truncated(cut);
    try {
        read_tensor(truncated);
        FAIL("truncated file accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::io);
    }
    CHECK_THROWS_AS(load_tensor("/nonexistent/x.mxt"), Error);
    // block size that does not divide the blocked axis
    std::stringstream odd(std::string("MXT1\x01\x05\x00\x00\x01\x00\x00\x00\x08\x00\x00\x00", 16) + std::string(8, '\0'));
    CHECK_THROWS_AS(read_tensor(odd), Error);
}

TEST_CASE("nibble packing")
{
    const std::vector<std::uint8_t> codes{1, 2, 3, 4, 5};
    const auto packed = pack_nibbles(codes);
    CHECK(packed == std::vector<std::uint8_t>{0x21, 0x43, 0x05});
    CHECK(unpack_nibbles(packed, 5) == codes);
}

TEST_CASE("synthetic data is determined by the seed")
{
    const auto x = synth_lognormal(8, 8, {0.0, 1.0, 9});
    const auto y = synth_lognormal(8, 8, {0.0, 1.0, 9});
    const auto z = synth_lognormal(8, 8, {0.0, 1.0, 10});
    CHECK(x.bits == y.bits);
    CHECK(x.bits != z.bits);
    std::size_t neg = 0;
    for (float v : x.to_floats()) {
        CHECK(v != 0.0f);
        neg += v < 0;
    }
    CHECK(neg > 10);
    CHECK(neg < 54);
    CHECK_THROWS_AS(synth_lognormal(2, 2, {0.0, 0.0, 1}), Error);
}

TEST_CASE("verify suite")
{
    VerifyOptions opts;
    opts.fuzz_cases = 40;
    opts.kernel_n = 32;
    const auto rep = verify(opts);
    for (const auto& c : rep.checks) {
        CAPTURE(c.name);
        CAPTURE(c.first_failure);
        CHECK(c.failures == 0);
    }
    CHECK(rep.pass());
    CHECK(verify(opts).to_json() == rep.to_json());

    // A codec that flips the low bit of one E4M3 encoding must be caught and named.
    opts.encode_fault = [](FormatKind f, std::uint32_t code, std::uint32_t enc) {
        return f == FormatKind::fp8_e4m3 && code == 0x42 ? enc ^ 1u : enc;
    };
    const auto broken = verify(opts);
    CHECK_FALSE(broken.pass());
    bool named = false;
    for (const auto& c : broken.checks)
        if (c.name == "codec_exhaustive_e4m3") {
            CHECK(c.failures == 1);
            named = c.first_failure.find("0x42") != std::string::npos;
        }
    CHECK(named);
}
