#include "doctest.h"

#include "mx/error.hpp"
#include "mx/kernels.hpp"
#include "mx/synth.hpp"

#include <random>

using namespace mx;
using namespace mx::kernels;

namespace {

struct Operands {
    MxMatrix a, b_rows, b_cols; // b_cols is B^T blocked along columns
};

Operands make_operands(std::size_t M, std::size_t N, std::size_t P, std::size_t k, FormatKind fmt,
                       std::uint64_t seed)
{
    const auto a = synth_lognormal(M, N, {0.0, 1.0, seed});
    const auto b = synth_lognormal(N, P, {0.0, 1.0, seed + 1000});
    Operands o;
    o.a = quantize_matrix(a, fmt, k, BlockAxis::along_cols);
    o.b_rows = quantize_matrix(b, fmt, k, BlockAxis::along_rows);
    o.b_cols = o.b_rows.transposed();
    return o;
}

const MxMatrix& b_for(KernelKind kind, const Operands& o)
{
    return kind == KernelKind::vmxdotp ? o.b_cols : o.b_rows;
}

void check_mx(KernelConfig cfg, const Operands& o)
{
    cfg = config_for(cfg, o.a, b_for(cfg.kind, o));
    const auto kp = build(cfg);
    const auto out = run(kp, o.a, b_for(cfg.kind, o), false);
    const auto ref = reference(cfg, o.a, b_for(cfg.kind, o));
    REQUIRE(out.c.rows == ref.rows);
    REQUIRE(out.c.cols == ref.cols);
    CHECK(out.c.format == ref.format);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < ref.bits.size(); ++i) bad += out.c.bits[i] != ref.bits[i];
    CHECK(bad == 0);
}

std::size_t count_ops(const rvv::Program& p, rvv::Op op)
{
    std::size_t n = 0;
    for (const auto& ins : p.code) n += ins.op == op;
    return n;
}

std::size_t count_retired(const rvv::Program& p, const rvv::Trace& t, bool (*pred)(const rvv::Instruction&))
{
    std::size_t n = 0;
    for (const auto& e : t) n += pred(p.code[e.pc]);
    return n;
}

} // namespace

TEST_CASE("baseline smoke case M=N=P=k_sw=32")
{
    const auto o = make_operands(32, 32, 32, 32, FormatKind::fp8_e4m3, 7);
    for (auto acc : {FormatKind::fp32, FormatKind::bf16}) {
        for (auto kind : {KernelKind::rvv_baseline, KernelKind::spatz_baseline, KernelKind::vmxdotp}) {
            CAPTURE(name(kind));
            KernelConfig cfg;
            cfg.kind = kind;
            cfg.acc = acc;
            check_mx(cfg, o);
        }
    }
}

TEST_CASE("every MX kernel matches its reference order, including tail tiles")
{
    struct Shape {
        std::size_t M, N, P;
    };
    for (const Shape s : {Shape{5, 64, 70}, Shape{16, 96, 33}, Shape{3, 32, 1}}) {
        for (auto fmt : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1}) {
            const auto o = make_operands(s.M, s.N, s.P, 32, fmt, s.M * 131 + s.P);
            for (auto acc : {FormatKind::fp32, FormatKind::bf16}) {
                for (auto kind : {KernelKind::rvv_baseline, KernelKind::spatz_baseline, KernelKind::vmxdotp}) {
                    if (kind != KernelKind::vmxdotp && fmt == FormatKind::fp4_e2m1) continue;
                    for (unsigned flen : {32u, 64u}) {
                        if (kind != KernelKind::vmxdotp && flen == 32) continue;
                        CAPTURE(name(kind));
                        CAPTURE(mx::name(fmt));
                        CAPTURE(mx::name(acc));
                        CAPTURE(flen);
                        CAPTURE(s.M);
                        CAPTURE(s.P);
                        KernelConfig cfg;
                        cfg.kind = kind;
                        cfg.acc = acc;
                        cfg.flen = flen;
                        check_mx(cfg, o);
                    }
                }
            }
        }
    }
}

TEST_CASE("plain kernels match the per-step rounded oracle")
{
    SUBCASE("zero matrices give zero")
    {
        DenseMatrix a(4, 8, FormatKind::fp32), b(8, 5, FormatKind::fp32);
        for (auto kind : {KernelKind::plain_fp32, KernelKind::plain_bf16}) {
            KernelConfig cfg;
            cfg.kind = kind;
            cfg = config_for(cfg, a, b);
            const auto out = run(build(cfg), a, b, false);
            for (auto bits : out.c.bits) CHECK(bits == 0);
        }
    }
    SUBCASE("random 8x8 and odd shapes")
    {
        struct Shape {
            std::size_t M, N, P;
        };
        for (const Shape s : {Shape{8, 8, 8}, Shape{7, 33, 70}, Shape{64, 32, 64}}) {
            const auto a = synth_lognormal(s.M, s.N, {0.0, 1.0, 11});
            const auto b = synth_lognormal(s.N, s.P, {0.0, 1.0, 12});
            for (auto kind : {KernelKind::plain_fp32, KernelKind::plain_bf16}) {
                CAPTURE(name(kind));
                KernelConfig cfg;
                cfg.kind = kind;
                cfg = config_for(cfg, a, b);
                const auto out = run(build(cfg), a, b, false);
                const auto ref = reference(cfg, a, b);
                CHECK(out.c.bits == ref.bits);
            }
        }
    }
}

TEST_CASE("results do not depend on tiling or unrolling")
{
    const auto o = make_operands(12, 64, 40, 32, FormatKind::fp8_e4m3, 99);
    struct Variant {
        KernelKind kind;
        std::size_t m_tile, p_tile, unroll;
    };
    const Variant variants[] = {
        {KernelKind::rvv_baseline, 1, 16, 1},  {KernelKind::rvv_baseline, 2, 64, 4},
        {KernelKind::rvv_baseline, 2, 7, 8},   {KernelKind::spatz_baseline, 1, 32, 2},
        {KernelKind::spatz_baseline, 1, 5, 4}, {KernelKind::vmxdotp, 3, 8, 1},
        {KernelKind::vmxdotp, 8, 32, 2},       {KernelKind::vmxdotp, 5, 17, 4},
    };
    for (const auto& v : variants) {
        CAPTURE(name(v.kind));
        CAPTURE(v.m_tile);
        CAPTURE(v.p_tile);
        CAPTURE(v.unroll);
        KernelConfig base;
        base.kind = v.kind;
        base = config_for(base, o.a, b_for(v.kind, o));
        KernelConfig tiled = base;
        tiled.m_tile = v.m_tile;
        tiled.p_tile = v.p_tile;
        tiled.unroll = v.unroll;
        const auto x = run(build(base), o.a, b_for(v.kind, o), false).c;
        const auto y = run(build(tiled), o.a, b_for(v.kind, o), false).c;
        CHECK(x.bits == y.bits);
        CHECK(build(tiled).unroll == v.unroll);
    }
}

TEST_CASE("baselines and vmxdotp agree when every block sum is exact")
{
    // Elements with exponents in [-1, 2] and 3 mantissa bits: products are
    // multiples of 2^-8 below 2^6, so eight of them sum exactly in FP32 and
    // both accumulation orders reduce to round(acc + block * scale).
    const std::size_t M = 8, N = 64, P = 32, k = 8;
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> exp(6, 9), man(0, 7), sgn(0, 1), sc(120, 134);
    auto code = [&] { return static_cast<std::uint8_t>(sgn(rng) << 7 | exp(rng) << 3 | man(rng)); };
    MxMatrix a(M, N, k, BlockAxis::along_cols, FormatKind::fp8_e4m3);
    MxMatrix b(N, P, k, BlockAxis::along_rows, FormatKind::fp8_e4m3);
    for (auto& e : a.elements()) e = code();
    for (auto& e : b.elements()) e = code();
    for (auto& s : a.scales()) s = static_cast<std::uint8_t>(sc(rng));
    for (auto& s : b.scales()) s = static_cast<std::uint8_t>(sc(rng));
    const MxMatrix bt = b.transposed();

    KernelConfig cfg;
    cfg.kind = KernelKind::vmxdotp;
    const auto vmx = run(build(config_for(cfg, a, bt)), a, bt, false).c;
    for (auto kind : {KernelKind::rvv_baseline, KernelKind::spatz_baseline}) {
        CAPTURE(name(kind));
        cfg.kind = kind;
        const auto base = run(build(config_for(cfg, a, b)), a, b, false).c;
        CHECK(base.bits == vmx.bits);
    }
}

TEST_CASE("program structure")
{
    KernelConfig cfg;
    cfg.M = 16;
    cfg.N = 64;
    cfg.P = 64;

    SUBCASE("BF16 baseline uses single-width FMAs")
    {
        cfg.kind = KernelKind::rvv_baseline;
        cfg.acc = FormatKind::bf16;
        const auto kp = build(cfg);
        CHECK(count_ops(kp.program, rvv::Op::vfwmacc_vf) == 0);
        CHECK(count_ops(kp.program, rvv::Op::vfmacc_vf) > 0);
        cfg.acc = FormatKind::fp32;
        CHECK(count_ops(build(cfg).program, rvv::Op::vfwmacc_vf) > 0);
    }
    SUBCASE("baseline contains conversion, FMA and scaling instructions")
    {
        cfg.kind = KernelKind::rvv_baseline;
        const auto kp = build(cfg);
        for (auto op : {rvv::Op::fcvt_h_b, rvv::Op::vfwcvt_f_f_v, rvv::Op::vfwmacc_vf, rvv::Op::vwcvtu_x_x_v,
                        rvv::Op::vwadd_vx, rvv::Op::vsll_vi, rvv::Op::vfmacc_vv})
            CHECK(count_ops(kp.program, op) > 0);
        CHECK(kp.config.m_tile == 2);
        CHECK(kp.config.p_tile == 64);
    }
    SUBCASE("vmxdotp kernel has no conversions and uses the wf/qf forms")
    {
        cfg.kind = KernelKind::vmxdotp;
        auto kp = build(cfg);
        CHECK(kp.config.m_tile == 8);
        CHECK(kp.config.p_tile == 32);
        CHECK(count_ops(kp.program, rvv::Op::vmxdotp_wf) > 0);
        for (const auto& ins : kp.program.code) {
            CHECK(ins.op != rvv::Op::fcvt_h_b);
            CHECK(ins.op != rvv::Op::fcvtp_h_b);
            CHECK(ins.op != rvv::Op::vfwcvt_f_f_v);
            CHECK(ins.op != rvv::Op::vwcvtu_x_x_v);
        }
        cfg.acc = FormatKind::bf16;
        kp = build(cfg);
        CHECK(count_ops(kp.program, rvv::Op::vmxdotp_qf) > 0);
        CHECK(count_ops(kp.program, rvv::Op::vmxdotp_wf) == 0);
    }
    SUBCASE("FP4 issues half as many vmxdotp as FP8")
    {
        cfg.kind = KernelKind::vmxdotp;
        auto issued = [&](FormatKind fmt) {
            const auto o = make_operands(cfg.M, cfg.N, cfg.P, 32, fmt, 3);
            KernelConfig c = config_for(cfg, o.a, o.b_cols);
            const auto kp = build(c);
            const auto out = run(kp, o.a, o.b_cols);
            return count_retired(kp.program, out.trace, [](const rvv::Instruction& i) { return i.is_vmxdotp(); });
        };
        const auto fp8 = issued(FormatKind::fp8_e4m3);
        const auto fp4 = issued(FormatKind::fp4_e2m1);
        CHECK(fp8 == 2 * fp4);
        CHECK(fp8 == 16 * 2 * (64 / 8)); // rows x P tiles x hardware blocks
    }
    SUBCASE("the two FP4 programs differ only in the CSR write and loop trip")
    {
        cfg.kind = KernelKind::vmxdotp;
        cfg.elem = FormatKind::fp8_e4m3;
        const auto k8 = build(cfg);
        cfg.elem = FormatKind::fp4_e2m1;
        const auto k4 = build(cfg);
        CHECK(k8.program.code.front().imm == 1);
        CHECK(k4.program.code.front().imm == 2);
        CHECK(k8.inner_trip * k8.unroll == 2 * k4.inner_trip * k4.unroll);
    }
    SUBCASE("register groups are aligned and disjoint")
    {
        for (auto kind : {KernelKind::rvv_baseline, KernelKind::spatz_baseline, KernelKind::vmxdotp,
                          KernelKind::plain_fp32, KernelKind::plain_bf16}) {
            for (auto acc : {FormatKind::fp32, FormatKind::bf16}) {
                cfg.kind = kind;
                cfg.acc = acc;
                const auto kp = build(cfg);
                std::vector<unsigned> starts;
                for (const auto& [role, r] : kp.vregs) starts.push_back(r);
                std::sort(starts.begin(), starts.end());
                CHECK(std::adjacent_find(starts.begin(), starts.end()) == starts.end());
                CHECK(starts.back() < 32);
            }
        }
    }
    SUBCASE("program text round-trips")
    {
        cfg.kind = KernelKind::spatz_baseline;
        const auto kp = build(cfg);
        const auto text = rvv::format_program(kp.program);
        CHECK(rvv::format_program(rvv::parse_program(text)) == text);
    }
}

TEST_CASE("kernel configuration checks")
{
    KernelConfig cfg;
    auto fails = [](KernelConfig c) {
        try {
            resolve(c);
        } catch (const Error& e) {
            return e.code() == ErrorCode::config;
        }
        return false;
    };
    cfg.N = 100;
    CHECK(fails(cfg));
    cfg.N = 128;
    cfg.k_sw = 12;
    CHECK(fails(cfg)); // N not divisible
    cfg.k_sw = 4;
    CHECK(fails(cfg)); // below the hardware block size
    cfg.k_sw = 32;
    cfg.p_tile = 33;
    CHECK(fails(cfg));
    cfg.p_tile = 0;
    cfg.elem = FormatKind::fp4_e2m1;
    cfg.k_sw = 8;
    CHECK(fails(cfg)); // FP4 needs 16
    cfg.kind = KernelKind::rvv_baseline;
    cfg.k_sw = 32;
    CHECK(fails(cfg)); // baselines are FP8 only
    cfg.elem = FormatKind::fp8_e5m2;
    cfg.unroll = 3;
    CHECK(fails(cfg));
    cfg.unroll = 0;
    CHECK_FALSE(fails(cfg));
    cfg.m_tile = 3;
    CHECK_THROWS_AS(build(cfg), Error); // register file exhausted
    cfg.m_tile = 0;
    cfg.flen = 16;
    CHECK(fails(cfg));
}

TEST_CASE("kernel config JSON")
{
    KernelConfig cfg;
    cfg.kind = KernelKind::spatz_baseline;
    cfg.acc = FormatKind::bf16;
    cfg.N = 256;
    cfg.unroll = 2;
    CHECK(KernelConfig::from_json(cfg.to_json()) == cfg);
    const auto c = KernelConfig::from_json(R"({"kind": "plain_bf16", "M": 8})");
    CHECK(c.kind == KernelKind::plain_bf16);
    CHECK(c.M == 8);
    CHECK(c.N == KernelConfig{}.N);
    CHECK_THROWS_AS(KernelConfig::from_json(R"({"bogus": 1})"), Error);
    CHECK_THROWS_AS(KernelConfig::from_json(R"({"kind": "nope"})"), Error);
    CHECK_THROWS_AS(KernelConfig::from_json("[1, 2"), Error);
}

TEST_CASE("operand layout checks")
{
    const auto o = make_operands(8, 64, 16, 32, FormatKind::fp8_e4m3, 1);
    KernelConfig cfg;
    cfg.kind = KernelKind::vmxdotp;
    try {
        config_for(cfg, o.a, o.b_rows);
        FAIL("row-major B accepted by vmxdotp");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::shape);
        CHECK(std::string(e.what()).find("column-major") != std::string::npos);
    }
    cfg.kind = KernelKind::rvv_baseline;
    CHECK_THROWS_AS(config_for(cfg, o.a, o.b_cols), Error);
    const auto other = make_operands(8, 64, 16, 16, FormatKind::fp8_e4m3, 1);
    try {
        config_for(cfg, o.a, other.b_rows);
        FAIL("mismatched k accepted");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("block sizes") != std::string::npos);
    }
}
