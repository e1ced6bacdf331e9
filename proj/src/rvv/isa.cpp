#include "mx/rvv/isa.hpp"

#include "mx/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <sstream>

namespace mx::rvv {

namespace {

using enum Unit;
using enum WidthClass;

constexpr std::array<OpInfo, static_cast<std::size_t>(Op::count_)> kOps{{
    {"li", "xi", scalar, single},
    {"addi", "xxi", scalar, single},
    {"add", "xxx", scalar, single},
    {"sub", "xxx", scalar, single},
    {"slli", "xxi", scalar, single},
    {"lbu", "xm", scalar, single},
    {"lw", "xm", scalar, single},
    {"flb", "fm", scalar, single},
    {"flh", "fm", scalar, single},
    {"flw", "fm", scalar, single},
    {"fld", "fm", scalar, single},
    {"fcvt.h.b", "ff", vau, widening},
    {"fcvtp.h.b", "ff", vau, widening},
    {"beq", "xxl", scalar, single},
    {"bne", "xxl", scalar, single},
    {"blt", "xxl", scalar, single},
    {"bge", "xxl", scalar, single},
    {"j", "l", scalar, single},
    {"csrwi", "ci", scalar, single},
    {"vsetvli", "xxt", vau, single},
    {"vle8.v", "va", vlsu, single},
    {"vle16.v", "va", vlsu, single},
    {"vle32.v", "va", vlsu, single},
    {"vle64.v", "va", vlsu, single},
    {"vse8.v", "va", vlsu, single},
    {"vse16.v", "va", vlsu, single},
    {"vse32.v", "va", vlsu, single},
    {"vse64.v", "va", vlsu, single},
    {"vlse32.v", "vax", vlsu, single},
    {"vlse64.v", "vax", vlsu, single},
    {"vmv.v.i", "vi", vau, single},
    {"vfwcvt.f.f.v", "vv", vau, widening},
    {"vwcvtu.x.x.v", "vv", vau, widening},
    {"vwadd.vx", "vvx", vau, widening},
    {"vadd.vx", "vvx", vau, single},
    {"vsll.vi", "vvi", vau, single},
    {"vfmacc.vv", "vvv", vau, single},
    {"vfmacc.vf", "vfv", vau, single},
    {"vfwmacc.vf", "vfv", vau, widening},
    {"vfwdotp.vv", "vvv", vau, widening},
    {"vfwdotp.vf", "vfv", vau, widening},
    {"vmxdotp.vv", "vvvvv", vau, single},
    {"vmxdotp.ww", "vvvvv", vau, narrowing},
    {"vmxdotp.qq", "vvvvv", vau, quad_narrowing},
    {"vmxdotp.vf", "vfvfv", vau, single},
    {"vmxdotp.wf", "vfvfv", vau, narrowing},
    {"vmxdotp.qf", "vfvfv", vau, quad_narrowing},
}};

constexpr std::array<std::string_view, 32> kXNames{
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0",
    "a1",   "a2", "a3", "a4", "a5", "a6", "a7", "s2", "s3", "s4", "s5",
    "s6",   "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"};

constexpr std::array<std::string_view, 32> kFNames{
    "ft0", "ft1", "ft2",  "ft3",  "ft4", "ft5", "ft6",  "ft7",  "fs0",  "fs1", "fa0",
    "fa1", "fa2", "fa3",  "fa4",  "fa5", "fa6", "fa7",  "fs2",  "fs3",  "fs4", "fs5",
    "fs6", "fs7", "fs8",  "fs9",  "fs10", "fs11", "ft8", "ft9", "ft10", "ft11"};

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& msg)
{
    throw Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + msg);
}

std::optional<std::int64_t> parse_int(std::string_view s)
{
    s = trim(s);
    bool neg = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
        neg = s.front() == '-';
        s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        s.remove_prefix(2);
    }
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return neg ? -v : v;
}

std::optional<unsigned> parse_numbered(std::string_view s, char prefix)
{
    if (s.size() < 2 || s[0] != prefix) return std::nullopt;
    const auto v = parse_int(s.substr(1));
    if (!v || *v < 0 || *v > 31) return std::nullopt;
    return static_cast<unsigned>(*v);
}

std::optional<unsigned> parse_xreg(std::string_view s)
{
    for (unsigned i = 0; i < 32; ++i)
        if (kXNames[i] == s) return i;
    if (s == "fp") return 8u;
    return parse_numbered(s, 'x');
}

std::optional<unsigned> parse_freg(std::string_view s)
{
    for (unsigned i = 0; i < 32; ++i)
        if (kFNames[i] == s) return i;
    return parse_numbered(s, 'f');
}

std::optional<unsigned> parse_vreg(std::string_view s) { return parse_numbered(s, 'v'); }

std::vector<std::string_view> split_operands(std::string_view s)
{
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',') {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

std::string lmul_text(int lmul_log2)
{
    return lmul_log2 >= 0 ? "m" + std::to_string(1 << lmul_log2) : "mf" + std::to_string(1 << -lmul_log2);
}

} // namespace

std::uint32_t VType::vlmax(unsigned vlen) const
{
    if (vill) return 0;
    const std::uint64_t bits = lmul_log2 >= 0 ? std::uint64_t(vlen) << lmul_log2 : vlen >> -lmul_log2;
    return static_cast<std::uint32_t>(bits / sew);
}

std::string VType::to_string() const
{
    if (vill) return "vill";
    return "e" + std::to_string(sew) + "," + lmul_text(lmul_log2);
}

std::optional<VType> make_vtype(unsigned sew, int lmul_log2, unsigned vlen, unsigned elen)
{
    if (sew != 8 && sew != 16 && sew != 32 && sew != 64) return std::nullopt;
    if (lmul_log2 < -3 || lmul_log2 > 3) return std::nullopt;
    if (sew > elen) return std::nullopt;
    // fractional LMUL must still hold one element of ELEN-relative width
    if (lmul_log2 < 0 && (sew << -lmul_log2) > elen) return std::nullopt;
    VType vt{sew, lmul_log2, false};
    if (vt.vlmax(vlen) == 0) return std::nullopt;
    return vt;
}

const OpInfo& info(Op op) { return kOps.at(static_cast<std::size_t>(op)); }

std::optional<Op> parse_mnemonic(std::string_view m)
{
    for (std::size_t i = 0; i < kOps.size(); ++i)
        if (kOps[i].mnemonic == m) return static_cast<Op>(i);
    return std::nullopt;
}

bool Instruction::is_branch() const
{
    return op == Op::beq || op == Op::bne || op == Op::blt || op == Op::bge || op == Op::j;
}

bool Instruction::is_vmxdotp() const { return op >= Op::vmxdotp_vv && op <= Op::vmxdotp_qf; }

bool Instruction::is_vmxdotp_vv() const { return op >= Op::vmxdotp_vv && op <= Op::vmxdotp_qq; }

void Program::resolve()
{
    for (auto& ins : code) {
        if (!ins.is_branch()) continue;
        const auto it = labels.find(ins.label);
        if (it == labels.end()) throw Error(ErrorCode::parse, "unknown label '" + ins.label + "'");
        ins.target = static_cast<std::int32_t>(it->second);
    }
}

std::string_view xreg_name(unsigned r) { return kXNames.at(r); }
std::string_view freg_name(unsigned r) { return kFNames.at(r); }

Program parse_program(std::string_view text)
{
    Program prog;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) {
            if (eol == text.size()) break;
            continue;
        }
        if (line.back() == ':') {
            const std::string name(trim(line.substr(0, line.size() - 1)));
            if (name.empty()) parse_error(line_no, "empty label");
            if (!prog.labels.emplace(name, prog.code.size()).second)
                parse_error(line_no, "duplicate label '" + name + "'");
            continue;
        }
        const auto sp = line.find_first_of(" \t");
        const std::string_view mnem = line.substr(0, sp);
        const auto op = parse_mnemonic(mnem);
        if (!op) parse_error(line_no, "unknown mnemonic '" + std::string(mnem) + "'");
        const auto ops = split_operands(sp == std::string_view::npos ? std::string_view{} : line.substr(sp));
        const std::string_view pattern = info(*op).operands;

        Instruction ins;
        ins.op = *op;
        std::size_t oi = 0;
        std::size_t ri = 0;
        auto need = [&](std::string_view what) -> std::string_view {
            if (oi >= ops.size()) parse_error(line_no, std::string(mnem) + ": missing " + std::string(what));
            return ops[oi++];
        };
        for (const char kind : pattern) {
            switch (kind) {
            case 'x': {
                const auto t = need("integer register");
                const auto r = parse_xreg(t);
                if (!r) parse_error(line_no, "bad integer register '" + std::string(t) + "'");
                ins.reg[ri++] = static_cast<std::uint8_t>(*r);
                break;
            }
            case 'f': {
                const auto t = need("FP register");
                const auto r = parse_freg(t);
                if (!r) parse_error(line_no, "bad FP register '" + std::string(t) + "'");
                ins.reg[ri++] = static_cast<std::uint8_t>(*r);
                break;
            }
            case 'v': {
                const auto t = need("vector register");
                const auto r = parse_vreg(t);
                if (!r) parse_error(line_no, "bad vector register '" + std::string(t) + "'");
                ins.reg[ri++] = static_cast<std::uint8_t>(*r);
                break;
            }
            case 'i': {
                const auto t = need("immediate");
                const auto v = parse_int(t);
                if (!v) parse_error(line_no, "bad immediate '" + std::string(t) + "'");
                ins.imm = *v;
                break;
            }
            case 'm':
            case 'a': {
                const auto t = need("memory operand");
                const auto open = t.find('(');
                if (open == std::string_view::npos || t.back() != ')')
                    parse_error(line_no, "bad memory operand '" + std::string(t) + "'");
                const auto off_text = trim(t.substr(0, open));
                if (kind == 'a' && !off_text.empty()) parse_error(line_no, "vector memory operands take no offset");
                std::int64_t off = 0;
                if (!off_text.empty()) {
                    const auto v = parse_int(off_text);
                    if (!v) parse_error(line_no, "bad offset '" + std::string(off_text) + "'");
                    off = *v;
                }
                const auto r = parse_xreg(trim(t.substr(open + 1, t.size() - open - 2)));
                if (!r) parse_error(line_no, "bad base register in '" + std::string(t) + "'");
                ins.reg[ri++] = static_cast<std::uint8_t>(*r);
                ins.imm = off;
                break;
            }
            case 'l': ins.label = std::string(need("label")); break;
            case 'c': {
                const auto t = need("CSR");
                if (t == "mxfmt") ins.reg[ri++] = static_cast<std::uint8_t>(Csr::mxfmt);
                else if (t == "fp16alt") ins.reg[ri++] = static_cast<std::uint8_t>(Csr::fp16alt);
                else parse_error(line_no, "unknown CSR '" + std::string(t) + "'");
                break;
            }
            case 't': {
                const auto e = need("SEW");
                const auto m = need("LMUL");
                const auto sew = e.size() > 1 && e[0] == 'e' ? parse_int(e.substr(1)) : std::nullopt;
                if (!sew) parse_error(line_no, "bad SEW '" + std::string(e) + "'");
                std::optional<std::int64_t> lm;
                int lmul_log2 = 0;
                if (m.size() > 2 && m.substr(0, 2) == "mf") {
                    lm = parse_int(m.substr(2));
                    if (lm && *lm > 0 && (*lm & (*lm - 1)) == 0) lmul_log2 = -std::countr_zero(std::uint64_t(*lm));
                    else lm.reset();
                } else if (m.size() > 1 && m[0] == 'm') {
                    lm = parse_int(m.substr(1));
                    if (lm && *lm > 0 && (*lm & (*lm - 1)) == 0) lmul_log2 = std::countr_zero(std::uint64_t(*lm));
                    else lm.reset();
                }
                if (!lm) parse_error(line_no, "bad LMUL '" + std::string(m) + "'");
                // policy flags are accepted; the simulator is always tail-undisturbed
                while (oi < ops.size() && (ops[oi] == "tu" || ops[oi] == "mu" || ops[oi] == "ta" || ops[oi] == "ma")) ++oi;
                ins.vtype = VType{static_cast<unsigned>(*sew), lmul_log2, false};
                break;
            }
            default: break;
            }
        }
        if (oi != ops.size()) parse_error(line_no, std::string(mnem) + ": too many operands");
        prog.code.push_back(std::move(ins));
        if (eol == text.size()) break;
    }
    prog.resolve();
    return prog;
}

std::string format_instruction(const Instruction& ins)
{
    const OpInfo& oi = info(ins.op);
    std::ostringstream os;
    os << oi.mnemonic;
    std::size_t ri = 0;
    bool first = true;
    for (const char kind : oi.operands) {
        os << (first ? " " : ", ");
        first = false;
        switch (kind) {
        case 'x': os << xreg_name(ins.reg[ri++]); break;
        case 'f': os << freg_name(ins.reg[ri++]); break;
        case 'v': os << 'v' << unsigned(ins.reg[ri++]); break;
        case 'i': os << ins.imm; break;
        case 'm': os << ins.imm << '(' << xreg_name(ins.reg[ri++]) << ')'; break;
        case 'a': os << '(' << xreg_name(ins.reg[ri++]) << ')'; break;
        case 'l': os << ins.label; break;
        case 'c': os << (ins.reg[ri++] == static_cast<std::uint8_t>(Csr::mxfmt) ? "mxfmt" : "fp16alt"); break;
        case 't': os << 'e' << ins.vtype.sew << ", " << lmul_text(ins.vtype.lmul_log2); break;
        default: break;
        }
    }
    return os.str();
}

std::string format_program(const Program& prog)
{
    std::multimap<std::size_t, std::string> at;
    for (const auto& [name, idx] : prog.labels) at.emplace(idx, name);
    std::ostringstream os;
    for (std::size_t i = 0; i <= prog.code.size(); ++i) {
        const auto [lo, hi] = at.equal_range(i);
        for (auto it = lo; it != hi; ++it) os << it->second << ":\n";
        if (i < prog.code.size()) os << "    " << format_instruction(prog.code[i]) << '\n';
    }
    return os.str();
}

void Builder::label(const std::string& name)
{
    if (!prog_.labels.emplace(name, prog_.code.size()).second)
        throw Error(ErrorCode::config, "duplicate label '" + name + "'");
}

void Builder::emit(Op op, std::initializer_list<unsigned> regs, std::int64_t imm)
{
    Instruction ins;
    ins.op = op;
    std::size_t i = 0;
    for (unsigned r : regs) ins.reg.at(i++) = static_cast<std::uint8_t>(r);
    ins.imm = imm;
    prog_.code.push_back(std::move(ins));
}

void Builder::vsetvli(unsigned rd, unsigned avl_reg, unsigned sew, int lmul_log2)
{
    Instruction ins;
    ins.op = Op::vsetvli;
    ins.reg[0] = static_cast<std::uint8_t>(rd);
    ins.reg[1] = static_cast<std::uint8_t>(avl_reg);
    ins.vtype = VType{sew, lmul_log2, false};
    prog_.code.push_back(std::move(ins));
}

void Builder::branch(Op op, unsigned rs1, unsigned rs2, const std::string& target)
{
    Instruction ins;
    ins.op = op;
    ins.reg[0] = static_cast<std::uint8_t>(rs1);
    ins.reg[1] = static_cast<std::uint8_t>(rs2);
    ins.label = target;
    prog_.code.push_back(std::move(ins));
}

std::string Builder::fresh_label(const std::string& stem) { return stem + std::to_string(label_counter_++); }

Program Builder::finish()
{
    prog_.resolve();
    Program out = std::move(prog_);
    prog_ = Program{};
    label_counter_ = 0;
    return out;
}

} // namespace mx::rvv
