#include "mx/verify.hpp"

#include "mx/block.hpp"
#include "mx/error.hpp"
#include "mx/experiment.hpp"
#include "mx/rvv/machine.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <random>

namespace mx {

namespace {

std::string hex(std::uint64_t v)
{
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

void fail(CheckResult& r, const std::string& what)
{
    if (r.failures++ == 0) r.first_failure = what;
}

struct Decoded {
    bool nan = false;
    bool inf = false;
    double value = 0;
};

// Value of an encoding computed straight from its bit fields.
Decoded from_fields(FormatKind f, std::uint32_t code)
{
    const ElementFormat& ef = format_of(f);
    Decoded d;
    if (f == FormatKind::e8m0) {
        if (code == 0xFF) d.nan = true;
        else d.value = std::ldexp(1.0, int(code) - 127);
        return d;
    }
    const int e = ef.exponent_bits, m = ef.mantissa_bits;
    const bool neg = (code >> (e + m)) & 1;
    const std::uint32_t exp = (code >> m) & ((1u << e) - 1), man = code & ((1u << m) - 1);
    const std::uint32_t emask = (1u << e) - 1, mmask = (1u << m) - 1;
    if (f == FormatKind::fp8_e4m3 && exp == emask && man == mmask) {
        d.nan = true;
        return d;
    }
    if (ef.has_inf && exp == emask) {
        (man == 0 ? d.inf : d.nan) = true;
        d.value = neg ? -INFINITY : INFINITY;
        return d;
    }
    const double mag = exp == 0 ? std::ldexp(double(man), 1 - ef.bias - m)
                                : std::ldexp(double((1u << m) + man), int(exp) - ef.bias - m);
    d.value = neg ? -mag : mag;
    return d;
}

CheckResult check_codec(FormatKind f, const VerifyOptions& opts)
{
    CheckResult r;
    r.name = "codec_exhaustive_" + std::string(name(f));
    const std::uint32_t count = 1u << format_of(f).total_bits();
    for (std::uint32_t code = 0; code < count; ++code) {
        ++r.cases;
        const Decoded want = from_fields(f, code);
        const Value got = decode(code, f);
        const bool same = want.nan ? got.is_nan()
                                   : (!got.is_nan() && got.to_double() == want.value &&
                                      std::signbit(got.to_double()) == std::signbit(want.value));
        if (!same) {
            fail(r, std::string(name(f)) + " decode(" + hex(code) + ") disagrees with its bit fields");
            continue;
        }
        std::uint32_t back = encode(got, f).bits;
        if (opts.encode_fault) back = opts.encode_fault(f, code, back);
        const bool ok = want.nan ? from_fields(f, back).nan : back == code;
        if (!ok) fail(r, std::string(name(f)) + " encode(decode(" + hex(code) + ")) = " + hex(back));
    }
    return r;
}

// Nearest encoding by scanning every code; ties go to the even code,
// overflow to infinity where the format has one and to max-finite otherwise.
std::uint32_t brute_nearest(double x, FormatKind f)
{
    const ElementFormat& ef = format_of(f);
    const std::uint32_t count = 1u << ef.total_bits();
    const double maxv = from_fields(f, ef.max_finite_bits()).value;
    const bool neg = std::signbit(x);
    const std::uint32_t sign = neg ? 1u << (ef.total_bits() - 1) : 0;
    const double ax = std::fabs(x);
    // Halfway point between max and the next (unrepresentable) binade step.
    const double ulp = maxv - from_fields(f, ef.max_finite_bits() - 1).value;
    if (ax >= maxv + ulp / 2 && ef.has_inf) return sign | (((1u << ef.exponent_bits) - 1) << ef.mantissa_bits);
    if (ax >= maxv) return sign | ef.max_finite_bits();
    std::uint32_t best = 0;
    double best_d = INFINITY;
    for (std::uint32_t c = 0; c < count / 2; ++c) {
        const Decoded d = from_fields(f, c);
        if (d.nan || d.inf) continue;
        const double dist = std::fabs(d.value - ax);
        if (dist < best_d || (dist == best_d && (c & 1) == 0)) {
            best = c;
            best_d = dist;
        }
    }
    return sign | best;
}

CheckResult check_rounding(FormatKind f, std::mt19937_64& rng, const VerifyOptions& opts)
{
    CheckResult r;
    r.name = "codec_rounding_" + std::string(name(f));
    const double maxv = from_fields(f, format_of(f).max_finite_bits()).value;
    std::uniform_real_distribution<double> frac(-1.25, 1.25);
    std::uniform_int_distribution<int> shift(-12, 0);
    for (int i = 0; i < 4000; ++i) {
        const double x = std::ldexp(frac(rng) * maxv, shift(rng));
        ++r.cases;
        std::uint32_t got = encode(x, f).bits;
        if (opts.encode_fault) got = opts.encode_fault(f, got, got);
        const std::uint32_t want = brute_nearest(x, f);
        const bool zero_match = from_fields(f, got).value == 0 && from_fields(f, want).value == 0 &&
                                std::signbit(from_fields(f, got).value) == std::signbit(x);
        if (got != want && !zero_match) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", x);
            fail(r, std::string(name(f)) + " encode(" + buf + ") = " + hex(got) + ", nearest is " + hex(want));
        }
    }
    return r;
}

std::uint64_t pack(const std::vector<std::uint8_t>& e, std::size_t first, unsigned k, unsigned ebits)
{
    std::uint64_t v = 0;
    for (unsigned j = 0; j < k; ++j) v |= std::uint64_t(e[first + j]) << (j * ebits);
    return v;
}

} // namespace

CheckResult fuzz_vmxdotp(rvv::Op op, unsigned flen, FormatKind elem, std::size_t cases, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    using rvv::Op;
    const auto& inf = rvv::info(op);
    CheckResult r;
    r.name = "vmxdotp_" + std::string(inf.mnemonic.substr(8)) + "_flen" + std::to_string(flen) + "_" +
             std::string(name(elem));
    const bool v = op == Op::vmxdotp_vv || op == Op::vmxdotp_vf;
    const bool w = op == Op::vmxdotp_ww || op == Op::vmxdotp_wf;
    const unsigned sew = flen / (v ? 1 : w ? 2 : 4);
    const FormatKind acc = sew == 32 ? FormatKind::fp32 : FormatKind::bf16;
    const unsigned ebits = static_cast<unsigned>(format_of(elem).total_bits());
    const unsigned k = flen / ebits;
    const bool scalar = op >= Op::vmxdotp_vf;
    const std::uint32_t codes = 1u << ebits;
    const std::uint32_t acc_nan = format_of(acc).canonical_nan();
    const std::uint32_t acc_inf = acc == FormatKind::fp32 ? 0x7F800000u : 0x7F80u;

    rvv::Instruction ins;
    ins.op = op;
    ins.reg = {0, static_cast<std::uint8_t>(scalar ? 10 : 8), 16, static_cast<std::uint8_t>(scalar ? 11 : 4), 5};
    auto element = [&](bool any) {
        for (;;) {
            const auto c = static_cast<std::uint8_t>(rng() % codes);
            const Decoded d = from_fields(elem, c);
            if (any || (!d.nan && !d.inf)) return c;
        }
    };
    auto scale = [&]() -> std::uint8_t {
        const auto roll = rng() % 64;
        if (roll == 0) return 0xFF;
        if (roll == 1) return static_cast<std::uint8_t>(rng() % 255);
        return static_cast<std::uint8_t>(96 + rng() % 64);
    };
    for (std::size_t t = 0; t < cases; ++t) {
        ++r.cases;
        rvv::VectorMachine m(rvv::MachineConfig{512, flen, 4096});
        m.mxfmt = elem;
        const auto vt = rvv::make_vtype(sew, 0, 512, flen);
        const std::uint32_t vl = m.set_vl(1 + rng() % 16, *vt);
        const bool specials = rng() % 4 == 0;
        std::vector<std::uint8_t> a(vl * k), b(vl * k), sa(vl), sb(vl);
        std::vector<std::uint32_t> acc0(vl);
        for (auto& e : a) e = element(specials);
        for (auto& e : b) e = element(specials);
        if (scalar)
            for (std::size_t i = k; i < a.size(); ++i) a[i] = a[i % k];
        for (std::uint32_t i = 0; i < vl; ++i) {
            sa[i] = scalar && i > 0 ? sa[0] : scale();
            sb[i] = scale();
            const auto roll = rng() % 32;
            acc0[i] = roll == 0   ? acc_nan
                      : roll == 1 ? acc_inf | (rng() % 2 ? (acc == FormatKind::fp32 ? 0x80000000u : 0x8000u) : 0u)
                                  : encode(std::ldexp(double(int(rng() % 2001) - 1000), int(rng() % 40) - 20), acc).bits;
            m.set_element(0, sew, i, acc0[i]);
            m.set_element(16, flen, i, pack(b, i * k, k, ebits));
            m.set_element(5, 8, i, sb[i]);
            if (!scalar) {
                m.set_element(8, flen, i, pack(a, i * k, k, ebits));
                m.set_element(4, 8, i, sa[i]);
            }
        }
        if (scalar) {
            m.f[10] = pack(a, 0, k, ebits);
            m.f[11] = sa[0];
        }
        try {
            m.execute(ins, 0);
        } catch (const Error& e) {
            fail(r, std::string(inf.mnemonic) + " raised: " + e.what());
            continue;
        }
        for (std::uint32_t i = 0; i < vl; ++i) {
            MxBlock ba{sa[i], elem, {a.begin() + i * k, a.begin() + (i + 1) * k}};
            MxBlock bb{sb[i], elem, {b.begin() + i * k, b.begin() + (i + 1) * k}};
            RefAccumulator ref(acc, acc0[i]);
            mxdp_reference(ba, bb, ref);
            const auto want = ref.finalize();
            const auto got = m.element(0, sew, i);
            if (got != want) {
                fail(r, std::string(inf.mnemonic) + " lane " + std::to_string(i) + ": got " + hex(got) +
                            ", reference " + hex(want));
                break;
            }
        }
    }
    return r;
}

namespace {

CheckResult check_kernels(const VerifyOptions& opts)
{
    using kernels::KernelConfig;
    using kernels::KernelKind;
    CheckResult r;
    r.name = "kernels_vs_oracle";
    std::vector<KernelConfig> cfgs;
    auto add = [&](KernelKind kind, FormatKind elem, FormatKind acc, unsigned flen) {
        KernelConfig c;
        c.kind = kind;
        c.elem = elem;
        c.acc = acc;
        c.flen = flen;
        c.M = 16;
        c.P = 16;
        c.N = opts.kernel_n;
        cfgs.push_back(c);
    };
    for (auto acc : {FormatKind::fp32, FormatKind::bf16}) {
        for (auto elem : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3}) {
            add(KernelKind::rvv_baseline, elem, acc, 64);
            add(KernelKind::spatz_baseline, elem, acc, 64);
        }
        for (auto elem : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1})
            for (unsigned flen : {32u, 64u}) add(KernelKind::vmxdotp, elem, acc, flen);
    }
    add(KernelKind::plain_fp32, FormatKind::fp8_e4m3, FormatKind::fp32, 64);
    add(KernelKind::plain_bf16, FormatKind::fp8_e4m3, FormatKind::bf16, 64);
    const auto results = run_sweep(cfgs, SynthParams{0.0, 1.0, opts.seed}, perf::CostTable::defaults(), true);
    for (const auto& p : results) {
        ++r.cases;
        if (p.mismatches != 0)
            fail(r, std::string(kernels::name(p.config.kind)) + " " + std::string(name(p.config.elem)) + "/" +
                        std::string(name(p.config.acc)) + " flen=" + std::to_string(p.config.flen) + ": " +
                        std::to_string(p.mismatches) + " elements differ");
    }
    return r;
}

} // namespace

bool VerifyReport::pass() const
{
    for (const auto& c : checks)
        if (c.failures) return false;
    return !checks.empty();
}

std::string VerifyReport::to_json(int indent) const
{
    nlohmann::ordered_json j;
    j["pass"] = pass();
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
        nlohmann::ordered_json o;
        o["name"] = c.name;
        o["cases"] = c.cases;
        o["failures"] = c.failures;
        if (!c.first_failure.empty()) o["first_failure"] = c.first_failure;
        j["checks"].push_back(o);
    }
    return j.dump(indent);
}

VerifyReport verify(const VerifyOptions& opts)
{
    VerifyReport rep;
    for (auto f : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1, FormatKind::e8m0,
                   FormatKind::bf16, FormatKind::fp16})
        rep.checks.push_back(check_codec(f, opts));
    std::mt19937_64 rng(opts.seed);
    for (auto f : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1})
        rep.checks.push_back(check_rounding(f, rng, opts));

    using rvv::Op;
    const std::pair<unsigned, Op> variants[] = {
        {64, Op::vmxdotp_ww}, {64, Op::vmxdotp_qq}, {64, Op::vmxdotp_wf}, {64, Op::vmxdotp_qf},
        {32, Op::vmxdotp_vv}, {32, Op::vmxdotp_ww}, {32, Op::vmxdotp_vf}, {32, Op::vmxdotp_wf},
    };
    for (const auto& [flen, op] : variants)
        for (auto f : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1})
            rep.checks.push_back(fuzz_vmxdotp(op, flen, f, opts.fuzz_cases, rng()));

    rep.checks.push_back(check_kernels(opts));
    return rep;
}

} // namespace mx
