#include "mx/perf.hpp"

#include "mx/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mx::perf {

using rvv::Op;
using rvv::Unit;

std::string_view name(InstrClass c)
{
    switch (c) {
    case InstrClass::fma: return "fma";
    case InstrClass::fp_convert: return "fp_convert";
    case InstrClass::mx_scaling: return "mx_scaling";
    case InstrClass::vmxdotp: return "vmxdotp";
    case InstrClass::overhead: return "overhead";
    }
    return "?";
}

InstrClass classify(Op op)
{
    switch (op) {
    case Op::vfmacc_vf:
    case Op::vfwmacc_vf:
    case Op::vfwdotp_vv:
    case Op::vfwdotp_vf: return InstrClass::fma;
    case Op::vfwcvt_f_f_v:
    case Op::fcvt_h_b:
    case Op::fcvtp_h_b: return InstrClass::fp_convert;
    case Op::vwcvtu_x_x_v:
    case Op::vwadd_vx:
    case Op::vadd_vx:
    case Op::vsll_vi:
    case Op::vfmacc_vv: return InstrClass::mx_scaling;
    case Op::vmxdotp_vv:
    case Op::vmxdotp_ww:
    case Op::vmxdotp_qq:
    case Op::vmxdotp_vf:
    case Op::vmxdotp_wf:
    case Op::vmxdotp_qf: return InstrClass::vmxdotp;
    default: return InstrClass::overhead;
    }
}

InstrClass classify(std::string_view mnemonic)
{
    const auto op = rvv::parse_mnemonic(mnemonic);
    if (!op) throw Error(ErrorCode::parse, "unknown mnemonic '" + std::string(mnemonic) + "'");
    return classify(*op);
}

CostTable CostTable::defaults()
{
    CostTable t;
    for (const char* m : {"vfmacc.vv", "vfmacc.vf", "vfwmacc.vf", "vfwdotp.vv", "vfwdotp.vf", "vfwcvt.f.f.v"})
        t.vau_bits[m] = 256.0;
    for (const char* m : {"vmv.v.i", "vwcvtu.x.x.v", "vwadd.vx", "vadd.vx", "vsll.vi"}) t.vau_bits[m] = 64.0;
    return t;
}

CostTable CostTable::from_json(std::string_view text)
{
    CostTable t = defaults();
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object()) throw Error(ErrorCode::parse, "cost table must be a JSON object");
        for (const auto& [key, v] : j.items()) {
            if (key == "vau_bits") {
                for (const auto& [m, bits] : v.items()) {
                    if (!rvv::parse_mnemonic(m)) throw Error(ErrorCode::parse, "cost table: unknown mnemonic '" + m + "'");
                    t.vau_bits[m] = bits.get<double>();
                }
            } else if (key == "vlsu_bits") t.vlsu_bits = v.get<double>();
            else if (key == "fpus") t.fpus = v.get<unsigned>();
            else if (key == "blocks_per_fpu") t.blocks_per_fpu = v.get<double>();
            else if (key == "scalar_overhead") t.scalar_overhead = v.get<double>();
            else if (key == "vsetvli_cycles") t.vsetvli_cycles = v.get<double>();
            else if (key == "scalar_fp_cycles") t.scalar_fp_cycles = v.get<double>();
            else if (key == "cores") t.cores = v.get<unsigned>();
            else if (key == "stall_period") t.stall_period = v.get<unsigned>();
            else throw Error(ErrorCode::parse, "cost table: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("cost table: ") + e.what());
    }
    bool ok = t.vlsu_bits > 0 && t.fpus > 0 && t.blocks_per_fpu > 0 && t.scalar_overhead >= 0 &&
              t.vsetvli_cycles >= 0 && t.scalar_fp_cycles >= 0 && t.cores > 0 && t.stall_period > 0;
    for (const auto& [m, bits] : t.vau_bits) ok = ok && bits > 0;
    if (!ok) throw Error(ErrorCode::config, "cost table throughputs must be positive");
    return t;
}

std::string CostTable::to_json(int indent) const
{
    nlohmann::ordered_json j;
    j["vau_bits"] = vau_bits;
    j["vlsu_bits"] = vlsu_bits;
    j["fpus"] = fpus;
    j["blocks_per_fpu"] = blocks_per_fpu;
    j["scalar_overhead"] = scalar_overhead;
    j["vsetvli_cycles"] = vsetvli_cycles;
    j["scalar_fp_cycles"] = scalar_fp_cycles;
    j["cores"] = cores;
    j["stall_period"] = stall_period;
    return j.dump(indent);
}

namespace {

unsigned memory_eew(Op op)
{
    switch (op) {
    case Op::vle8:
    case Op::vse8: return 8;
    case Op::vle16:
    case Op::vse16: return 16;
    case Op::vle32:
    case Op::vse32:
    case Op::vlse32: return 32;
    default: return 64;
    }
}

std::uint64_t ceil_cycles(double work, double rate) { return static_cast<std::uint64_t>(std::ceil(work / rate)); }

} // namespace

Cost cost(const rvv::Instruction& ins, const rvv::VType& vtype, std::uint32_t vl, const CostTable& t)
{
    const auto& inf = rvv::info(ins.op);
    if (inf.unit == Unit::scalar) return {Unit::scalar, 1};
    if (ins.op == Op::vsetvli) return {Unit::vau, static_cast<std::uint64_t>(t.vsetvli_cycles)};
    if (ins.op == Op::fcvt_h_b || ins.op == Op::fcvtp_h_b)
        return {Unit::vau, static_cast<std::uint64_t>(t.scalar_fp_cycles)};
    if (inf.unit == Unit::vlsu) return {Unit::vlsu, ceil_cycles(double(vl) * memory_eew(ins.op), t.vlsu_bits)};
    if (ins.is_vmxdotp()) return {Unit::vau, ceil_cycles(vl, t.fpus * t.blocks_per_fpu)};
    const auto it = t.vau_bits.find(std::string(inf.mnemonic));
    if (it == t.vau_bits.end())
        throw Error(ErrorCode::config, "cost table has no VAU rate for " + std::string(inf.mnemonic));
    const unsigned eew = inf.width == rvv::WidthClass::widening ? 2 * vtype.sew : vtype.sew;
    return {Unit::vau, ceil_cycles(double(vl) * eew, it->second)};
}

bool bank_conflict(const rvv::Instruction& ins)
{
    if (!ins.is_vmxdotp_vv()) return false;
    const unsigned vd = ins.reg[0] % 4, vs2 = ins.reg[2] % 4, vs4 = ins.reg[4] % 4;
    return vd == vs2 || vd == vs4 || vs2 == vs4;
}

namespace {

// Running count of conflicting vmxdotp cycles; returns the stalls this issue adds.
struct StallCounter {
    std::uint64_t cycles = 0;
    std::uint64_t add(std::uint64_t c, unsigned period)
    {
        const std::uint64_t before = cycles / period;
        cycles += c;
        return cycles / period - before;
    }
};

} // namespace

std::uint64_t scale_prefetch_stall(const rvv::Program& prog, const rvv::Trace& trace, const CostTable& t)
{
    StallCounter sc;
    std::uint64_t stalls = 0;
    for (const auto& e : trace) {
        const auto& ins = prog.code.at(e.pc);
        if (bank_conflict(ins)) stalls += sc.add(cost(ins, e.vtype, e.vl, t).cycles, t.stall_period);
    }
    return stalls;
}

double CycleReport::fraction(InstrClass c) const
{
    const auto it = vau_class.find(c);
    return total == 0 || it == vau_class.end() ? 0.0 : double(it->second) / double(total);
}

double CycleReport::vau_fraction(InstrClass c) const
{
    const auto it = vau_class.find(c);
    return vau_busy == 0 || it == vau_class.end() ? 0.0 : double(it->second) / double(vau_busy);
}

std::string CycleReport::to_json(int indent) const
{
    nlohmann::ordered_json j;
    j["total_cycles"] = total;
    j["vau_busy"] = vau_busy;
    nlohmann::ordered_json cls;
    for (auto c : all_classes) cls[std::string(name(c))] = vau_class.count(c) ? vau_class.at(c) : 0;
    j["vau_class_cycles"] = cls;
    nlohmann::ordered_json frac;
    for (auto c : all_classes) frac[std::string(name(c))] = fraction(c);
    j["fraction_of_total"] = frac;
    j["vlsu_cycles"] = vlsu;
    j["scalar_cycles"] = scalar;
    j["stall_cycles"] = stalls;
    j["segments"] = segments;
    j["retired"] = retired;
    j["flops"] = flops;
    j["flop_per_cycle"] = flop_per_cycle;
    j["peak_flop_per_cycle"] = peak_flop_per_cycle;
    j["utilization"] = utilization;
    return j.dump(indent);
}

std::string CycleReport::to_csv() const
{
    std::ostringstream os;
    os << "class,cycles,fraction_of_total,fraction_of_vau\n";
    for (auto c : all_classes)
        os << name(c) << ',' << (vau_class.count(c) ? vau_class.at(c) : 0) << ',' << fraction(c) << ','
           << vau_fraction(c) << '\n';
    return os.str();
}

CycleReport analyze(const rvv::Program& prog, const rvv::Trace& trace, const CostTable& t, double flops,
                    double peak)
{
    CycleReport r;
    for (auto c : all_classes) r.vau_class[c] = 0;
    r.flops = flops;
    r.peak_flop_per_cycle = peak;
    if (trace.empty()) return r;

    StallCounter sc;
    std::uint64_t seg_vau = 0, seg_vlsu = 0, seg_issue = 0;
    auto close_segment = [&] {
        const auto scalar = seg_issue + static_cast<std::uint64_t>(t.scalar_overhead);
        r.total += std::max({seg_vau, seg_vlsu, scalar});
        r.scalar += scalar;
        ++r.segments;
        seg_vau = seg_vlsu = seg_issue = 0;
    };
    for (const auto& e : trace) {
        const auto& ins = prog.code.at(e.pc);
        const Cost c = cost(ins, e.vtype, e.vl, t);
        ++seg_issue;
        if (c.unit == Unit::vau) {
            std::uint64_t cyc = c.cycles;
            r.vau_class[classify(ins.op)] += c.cycles;
            if (bank_conflict(ins)) {
                const auto s = sc.add(c.cycles, t.stall_period);
                r.stalls += s;
                r.vau_class[InstrClass::overhead] += s;
                cyc += s;
            }
            seg_vau += cyc;
            r.vau_busy += cyc;
        } else if (c.unit == Unit::vlsu) {
            seg_vlsu += c.cycles;
            r.vlsu += c.cycles;
        }
        if (ins.is_branch()) close_segment();
    }
    if (seg_issue) close_segment();
    r.retired = trace.size();

    const double useful = double(r.vau_class[InstrClass::fma] + r.vau_class[InstrClass::vmxdotp]);
    r.utilization = std::min(1.0, useful / double(r.total));
    r.flop_per_cycle = flops * t.cores / double(r.total);
    return r;
}

double peak_flop_per_cycle(const kernels::KernelConfig& cfg, const CostTable& t)
{
    const auto c = kernels::resolve(cfg);
    if (kernels::is_mx(c.kind))
        return 2.0 * t.cores * t.fpus * t.blocks_per_fpu * double(kernels::hardware_k(c.elem, c.flen));
    const double bits = t.vau_bits.at("vfmacc.vf");
    return 2.0 * t.cores * bits / format_of(c.acc).total_bits();
}

CycleReport analyze(const kernels::KernelProgram& kp, const rvv::Trace& trace, const CostTable& t)
{
    const auto& c = kp.config;
    return analyze(kp.program, trace, t, 2.0 * double(c.M) * double(c.N) * double(c.P), peak_flop_per_cycle(c, t));
}

} // namespace mx::perf
