// One line per acceptance criterion; exit status is the number of failures.

#include "mx/block.hpp"
#include "mx/experiment.hpp"
#include "mx/perf.hpp"
#include "mx/rvv/machine.hpp"
#include "mx/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace mx;
using kernels::KernelConfig;
using kernels::KernelKind;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const char* title, bool pass, double seconds, double limit, const std::string& detail)
{
    const bool in_time = seconds < limit;
    const bool ok = pass && in_time;
    failures += !ok;
    std::printf("%s %d %s: %s (%.2f s, limit %.0f s)\n", ok ? "PASS" : "FAIL", id, title, detail.c_str(), seconds,
                limit);
    std::fflush(stdout);
}

template <typename F>
double timed(F&& f)
{
    const auto t0 = Clock::now();
    f();
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- 1: codec ---------------------------------------------------------------

// Encoding value from the bit fields, NaN as std::nan.
double field_value(FormatKind f, std::uint32_t code)
{
    const ElementFormat& ef = format_of(f);
    if (f == FormatKind::e8m0) return code == 0xFF ? NAN : std::ldexp(1.0, int(code) - 127);
    const int e = ef.exponent_bits, m = ef.mantissa_bits;
    const std::uint32_t exp = (code >> m) & ((1u << e) - 1), man = code & ((1u << m) - 1);
    const double sign = (code >> (e + m)) & 1 ? -1.0 : 1.0;
    if (f == FormatKind::fp8_e4m3 && exp == 15 && man == 7) return NAN;
    if (f == FormatKind::fp8_e5m2 && exp == 31) return man ? NAN : sign * INFINITY;
    const double mag = exp == 0 ? std::ldexp(double(man), 1 - ef.bias - m)
                                : std::ldexp(double((1u << m) | man), int(exp) - ef.bias - m);
    return sign * mag;
}

// Nearest finite code with ties to the even code; beyond the largest finite
// value plus half a step E5M2 goes to infinity and the others saturate.
std::uint32_t nearest_code(double x, FormatKind f)
{
    const std::uint32_t count = 1u << format_of(f).total_bits();
    std::uint32_t best = 0;
    double best_d = INFINITY, maxv = 0, below_max = 0;
    std::uint32_t max_code = 0;
    for (std::uint32_t c = 0; c < count; ++c) {
        const double v = field_value(f, c);
        if (!std::isfinite(v)) continue;
        if (std::signbit(v) != std::signbit(x) && v != 0) continue;
        if (std::fabs(v) > maxv) {
            below_max = maxv;
            maxv = std::fabs(v);
            max_code = c;
        } else if (std::fabs(v) > below_max && std::fabs(v) < maxv) {
            below_max = std::fabs(v);
        }
        const double d = std::fabs(v - x);
        const bool sign_ok = std::signbit(v) == std::signbit(x);
        if (d < best_d || (d == best_d && sign_ok && ((c & 1) == 0 || !(std::signbit(field_value(f, best)) == std::signbit(x))))) {
            best = c;
            best_d = d;
        }
    }
    if (f == FormatKind::fp8_e5m2 && std::fabs(x) >= maxv + (maxv - below_max) / 2)
        return (std::signbit(x) ? 0x80u : 0u) | 0x7Cu;
    if (std::fabs(x) >= maxv) return max_code;
    return best;
}

void criterion1()
{
    std::size_t checked = 0, bad = 0;
    std::string first;
    const double secs = timed([&] {
        for (auto f : {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1, FormatKind::e8m0}) {
            const std::uint32_t count = 1u << format_of(f).total_bits();
            std::vector<double> positives;
            for (std::uint32_t c = 0; c < count; ++c) {
                ++checked;
                const double want = field_value(f, c);
                const Value v = decode(c, f);
                const std::uint32_t back = encode(v, f).bits;
                bool ok;
                if (std::isnan(want)) ok = v.is_nan() && std::isnan(field_value(f, back));
                else ok = v.to_double() == want && std::signbit(v.to_double()) == std::signbit(want) && back == c;
                if (ok && std::isfinite(want) && !std::isnan(want) && want > 0) positives.push_back(want);
                if (!ok && bad++ == 0) first = std::string(name(f)) + " code " + std::to_string(c);
            }
            std::sort(positives.begin(), positives.end());
            // Midpoints and quarter points between neighbours, both signs, plus overflow.
            std::vector<double> probes;
            for (std::size_t i = 0; i + 1 < positives.size(); ++i) {
                const double lo = positives[i], hi = positives[i + 1];
                probes.insert(probes.end(), {(lo + hi) / 2, lo + (hi - lo) / 4, hi - (hi - lo) / 4});
            }
            if (f != FormatKind::e8m0) {
                probes.push_back(positives.front() / 2);
                probes.push_back(positives.front() / 3);
                probes.push_back(positives.back() * 1.1);
                probes.push_back(positives.back() * 4);
            }
            for (double p : probes)
                for (double x : {p, f == FormatKind::e8m0 ? p : -p}) {
                    ++checked;
                    const auto got = encode(x, f, {Rounding::nearest_even,
                                                   format_of(f).has_inf ? Overflow::ieee : Overflow::saturate})
                                         .bits;
                    const auto want = nearest_code(x, f);
                    if (got != want && bad++ == 0)
                        first = std::string(name(f)) + " encode(" + std::to_string(x) + ") = " + std::to_string(got) +
                                ", nearest " + std::to_string(want);
                }
        }
    });
    report(1, "codec exhaustiveness", bad == 0, secs, 1.0,
           std::to_string(checked) + " encodings and rounding probes, " + std::to_string(bad) + " wrong" +
               (first.empty() ? "" : " (first: " + first + ")"));
}

// ---- 2: vmxdotp fuzz --------------------------------------------------------

void criterion2()
{
    using rvv::Op;
    struct Family {
        const char* name;
        Op op;
        std::vector<unsigned> flens;
    };
    const Family fams[] = {{"vv", Op::vmxdotp_vv, {32}}, {"vf", Op::vmxdotp_vf, {32}},
                           {"ww", Op::vmxdotp_ww, {32, 64}}, {"wf", Op::vmxdotp_wf, {32, 64}},
                           {"qq", Op::vmxdotp_qq, {64}}, {"qf", Op::vmxdotp_qf, {64}}};
    const FormatKind formats[] = {FormatKind::fp8_e5m2, FormatKind::fp8_e4m3, FormatKind::fp4_e2m1};
    std::size_t cases = 0, bad = 0;
    std::string first, counts;
    const double secs = timed([&] {
        std::uint64_t seed = 7;
        for (const auto& fam : fams) {
            const std::size_t combos = fam.flens.size() * 3;
            const std::size_t per = (10000 + combos - 1) / combos;
            std::size_t fam_cases = 0;
            for (unsigned flen : fam.flens)
                for (auto f : formats) {
                    const auto r = fuzz_vmxdotp(fam.op, flen, f, per, seed++);
                    fam_cases += r.cases;
                    bad += r.failures;
                    if (r.failures && first.empty()) first = r.name + ": " + r.first_failure;
                }
            cases += fam_cases;
            counts += std::string(counts.empty() ? "" : " ") + fam.name + "=" + std::to_string(fam_cases);
        }
    });
    report(2, "vmxdotp bit-exactness", bad == 0, secs, 30.0,
           std::to_string(cases) + " cases (" + counts + "), " + std::to_string(bad) + " failing" +
               (first.empty() ? "" : " (first: " + first + ")"));
}

// ---- 3: block-size decomposition -------------------------------------------

void criterion3()
{
    std::size_t blocks = 0, bad = 0;
    const double secs = timed([&] {
        std::mt19937_64 rng(3);
        const unsigned lanes = 16;
        rvv::Instruction ins;
        ins.op = rvv::Op::vmxdotp_ww;
        ins.reg = {0, 8, 16, 4, 5};
        for (auto fmt : {FormatKind::fp8_e4m3, FormatKind::fp8_e5m2}) {
            const auto& ef = format_of(fmt);
            const int m = ef.mantissa_bits;
            // Elements with exponent fields in a narrow band keep every partial
            // sum exactly representable in FP32, so chaining cannot round.
            auto element = [&]() -> std::uint8_t {
                const std::uint32_t exp = 6 + rng() % 4, man = rng() % (1u << m);
                return static_cast<std::uint8_t>((rng() % 2) << 7 | exp << m | man);
            };
            for (std::size_t done = 0; done < 500; done += lanes) {
                rvv::VectorMachine vm(rvv::MachineConfig{512, 64, 4096});
                vm.mxfmt = fmt;
                vm.set_vl(lanes, *rvv::make_vtype(32, 0, 512, 64));
                std::vector<MxBlock> as(lanes), bs(lanes);
                for (unsigned i = 0; i < lanes; ++i) {
                    as[i] = {static_cast<std::uint8_t>(120 + rng() % 15), fmt, {}};
                    bs[i] = {static_cast<std::uint8_t>(120 + rng() % 15), fmt, {}};
                    for (int j = 0; j < 32; ++j) {
                        as[i].elements.push_back(element());
                        bs[i].elements.push_back(element());
                    }
                    vm.set_element(0, 32, i, 0);
                    vm.set_element(4, 8, i, as[i].scale);
                    vm.set_element(5, 8, i, bs[i].scale);
                }
                for (int issue = 0; issue < 4; ++issue) {
                    for (unsigned i = 0; i < lanes; ++i) {
                        std::uint64_t pa = 0, pb = 0;
                        for (int j = 0; j < 8; ++j) {
                            pa |= std::uint64_t(as[i].elements[issue * 8 + j]) << (8 * j);
                            pb |= std::uint64_t(bs[i].elements[issue * 8 + j]) << (8 * j);
                        }
                        vm.set_element(8, 64, i, pa);
                        vm.set_element(16, 64, i, pb);
                    }
                    vm.execute(ins, 0);
                }
                for (unsigned i = 0; i < lanes; ++i) {
                    RefAccumulator ref(FormatKind::fp32);
                    mxdp_reference(as[i], bs[i], ref);
                    ++blocks;
                    bad += vm.element(0, 32, i) != ref.finalize();
                }
            }
        }
    });
    report(3, "block-size decomposition", bad == 0 && blocks >= 1000, secs, 10.0,
           std::to_string(blocks) + " k=32 blocks as 4 chained k=8 issues, " + std::to_string(bad) + " differ");
}

// ---- 4: kernels -------------------------------------------------------------

void criterion4()
{
    std::vector<KernelConfig> cfgs;
    for (auto kind : {KernelKind::rvv_baseline, KernelKind::spatz_baseline, KernelKind::vmxdotp,
                      KernelKind::plain_fp32, KernelKind::plain_bf16})
        for (auto acc : {FormatKind::fp32, FormatKind::bf16})
            for (std::size_t n : {32, 128}) {
                if (kind == KernelKind::plain_fp32 && acc != FormatKind::fp32) continue;
                if (kind == KernelKind::plain_bf16 && acc != FormatKind::bf16) continue;
                KernelConfig c;
                c.kind = kind;
                c.acc = acc;
                c.M = c.P = 64;
                c.N = n;
                cfgs.push_back(c);
                if (kind == KernelKind::vmxdotp) {
                    c.elem = FormatKind::fp4_e2m1;
                    cfgs.push_back(c);
                }
            }
    std::size_t bad = 0, elems = 0;
    std::string first;
    const double secs = timed([&] {
        for (const auto& r : run_sweep(cfgs, {0.0, 1.0, 11}, perf::CostTable::defaults(), true)) {
            elems += r.c.bits.size();
            bad += r.mismatches;
            if (r.mismatches && first.empty())
                first = std::string(kernels::name(r.config.kind)) + " N=" + std::to_string(r.config.N);
        }
    });
    report(4, "kernel functional equivalence", bad == 0, secs, 120.0,
           std::to_string(cfgs.size()) + " runs, " + std::to_string(elems) + " outputs, " + std::to_string(bad) +
               " mismatches" + (first.empty() ? "" : " (first: " + first + ")"));
}

// ---- 5-7: performance model -------------------------------------------------

perf::CycleReport model(KernelKind kind, FormatKind acc, std::size_t n, FormatKind elem = FormatKind::fp8_e4m3)
{
    KernelConfig c;
    c.kind = kind;
    c.acc = acc;
    c.elem = elem;
    c.M = c.P = 64;
    c.N = n;
    return run_point(c, SynthParams{0.0, 1.0, 42}, perf::CostTable::defaults(), false).report;
}

void criterion5()
{
    using perf::InstrClass;
    double conv = 0, scal = 0, fma = 0;
    const double secs = timed([&] {
        const auto r = model(KernelKind::rvv_baseline, FormatKind::fp32, 128);
        conv = r.fraction(InstrClass::fp_convert);
        scal = r.fraction(InstrClass::mx_scaling);
        fma = model(KernelKind::plain_fp32, FormatKind::fp32, 128).vau_fraction(InstrClass::fma);
    });
    const bool ok = std::fabs(conv - 0.195) <= 0.05 && std::fabs(scal - 0.162) <= 0.05 && fma >= 0.95;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "rvv-baseline fp_convert %.1f%% (19.5 +-5), mx_scaling %.1f%% (16.2 +-5); plain-fp32 fma %.1f%% of "
                  "VAU (>= 95)",
                  100 * conv, 100 * scal, 100 * fma);
    report(5, "instruction-class breakdown", ok, secs, 60.0, buf);
}

void criterion6()
{
    double s32 = 0, s16 = 0, sp16 = 0;
    const double secs = timed([&] {
        const double vmx32 = double(model(KernelKind::vmxdotp, FormatKind::fp32, 128).total);
        const double vmx16 = double(model(KernelKind::vmxdotp, FormatKind::bf16, 128).total);
        s32 = double(model(KernelKind::rvv_baseline, FormatKind::fp32, 128).total) / vmx32;
        s16 = double(model(KernelKind::rvv_baseline, FormatKind::bf16, 128).total) / vmx16;
        sp16 = double(model(KernelKind::spatz_baseline, FormatKind::bf16, 128).total) / vmx16;
    });
    const bool ok = s32 >= 5 && s32 <= 9 && s16 >= 3.5 && s16 <= 6 && sp16 >= 1.5 && sp16 <= 2.5;
    char buf[200];
    std::snprintf(buf, sizeof buf, "vs rvv-baseline fp32 %.2fx [5,9], bf16 %.2fx [3.5,6]; vs spatz-baseline bf16 %.2fx [1.5,2.5]",
                  s32, s16, sp16);
    report(6, "speedup bands", ok, secs, 60.0, buf);
}

void criterion7()
{
    perf::CycleReport fp8, fp4;
    const double secs = timed([&] {
        fp8 = model(KernelKind::vmxdotp, FormatKind::fp32, 512);
        fp4 = model(KernelKind::vmxdotp, FormatKind::fp32, 512, FormatKind::fp4_e2m1);
    });
    const double ratio = fp4.flop_per_cycle / fp8.flop_per_cycle;
    const bool ok = fp8.peak_flop_per_cycle == 128 && fp4.peak_flop_per_cycle == 256 &&
                    fp8.flop_per_cycle >= 0.9 * 128 && fp4.flop_per_cycle >= 0.9 * 256 && std::fabs(ratio - 2) <= 0.2;
    char buf[200];
    std::snprintf(buf, sizeof buf, "N=512 FP8 %.1f of 128 FLOP/cycle (%.1f%%), FP4 %.1f of 256 (%.1f%%), FP4/FP8 %.3f",
                  fp8.flop_per_cycle, 100 * fp8.flop_per_cycle / 128, fp4.flop_per_cycle,
                  100 * fp4.flop_per_cycle / 256, ratio);
    report(7, "utilization and peak", ok, secs, 60.0, buf);
}

// ---- 8: stall rule ----------------------------------------------------------

void criterion8()
{
    const auto t = perf::CostTable::defaults();
    auto trace_of = [](rvv::Op op, std::array<std::uint8_t, 5> regs, std::size_t n, unsigned sew, std::uint32_t vl) {
        rvv::Program p;
        rvv::Trace tr;
        rvv::Instruction ins;
        ins.op = op;
        ins.reg = regs;
        for (std::size_t i = 0; i < n; ++i) {
            p.code.push_back(ins);
            tr.push_back({static_cast<std::uint32_t>(i), rvv::VType{sew, 0, false}, vl});
        }
        return std::pair{p, tr};
    };
    bool ok = true;
    std::string detail;
    const double secs = timed([&] {
        std::uint64_t vf_stalls = 0;
        for (auto op : {rvv::Op::vmxdotp_vf, rvv::Op::vmxdotp_wf, rvv::Op::vmxdotp_qf}) {
            const auto [p, tr] = trace_of(op, {0, 10, 16, 11, 20}, 64, 32, 32);
            vf_stalls += perf::scale_prefetch_stall(p, tr, t);
        }
        // vd=v0, vs2=v8, vs4=v16 share bank 0.
        std::uint64_t vv_cycles = 0, vv_stalls = 0;
        bool exact = true;
        for (auto op : {rvv::Op::vmxdotp_vv, rvv::Op::vmxdotp_ww, rvv::Op::vmxdotp_qq})
            for (std::uint32_t vl : {4u, 8u, 16u, 32u}) {
                const auto [p, tr] = trace_of(op, {0, 4, 8, 12, 16}, 40, 32, vl);
                std::uint64_t cyc = 0;
                for (const auto& e : tr) cyc += perf::cost(p.code[e.pc], e.vtype, e.vl, t).cycles;
                const auto st = perf::scale_prefetch_stall(p, tr, t);
                exact = exact && st == cyc / 8;
                vv_cycles += cyc;
                vv_stalls += st;
            }
        const auto [dp, dtr] = trace_of(rvv::Op::vmxdotp_ww, {0, 4, 1, 12, 2}, 64, 32, 32);
        const auto disjoint = perf::scale_prefetch_stall(dp, dtr, t);
        ok = vf_stalls == 0 && exact && disjoint == 0;
        detail = "vector-scalar stalls " + std::to_string(vf_stalls) + "; colliding vector-vector " +
                 std::to_string(vv_stalls) + " stalls over " + std::to_string(vv_cycles) +
                 " cycles (1 per 8); disjoint banks " + std::to_string(disjoint);
    });
    report(8, "scale-prefetch stall rule", ok, secs, 10.0, detail);
}

} // namespace

int main()
{
    const std::function<void()> all[] = {criterion1, criterion2, criterion3, criterion4,
                                         criterion5, criterion6, criterion7, criterion8};
    for (const auto& c : all) {
        try {
            c();
        } catch (const std::exception& e) {
            ++failures;
            std::printf("FAIL (exception: %s)\n", e.what());
        }
    }
    std::printf("%d of 8 criteria failed\n", failures);
    return failures;
}
