#include "mx/rvv/machine.hpp"

#include "fastfp.hpp"
#include "quantum_dot.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mx::rvv {

using detail::fast_decode;
using detail::fast_encode;

namespace {

[[noreturn]] void illegal(const std::string& msg) { throw Error(ErrorCode::illegal_insn, msg); }

int log2u(unsigned v) { return std::countr_zero(v); }

unsigned group_regs(int emul_log2) { return emul_log2 > 0 ? 1u << emul_log2 : 1u; }

bool overlaps(unsigned a, unsigned na, unsigned b, unsigned nb) { return a < b + nb && b < a + na; }

std::uint64_t width_mask(unsigned bits) { return bits >= 64 ? ~0ull : (1ull << bits) - 1ull; }

std::int64_t sign_extend(std::uint64_t v, unsigned bits)
{
    if (bits >= 64) return static_cast<std::int64_t>(v);
    const std::uint64_t m = 1ull << (bits - 1);
    v &= width_mask(bits);
    return static_cast<std::int64_t>((v ^ m) - m);
}

std::string vname(unsigned r) { return "v" + std::to_string(r); }

class Exec {
public:
    Exec(VectorMachine& m, const Instruction& ins) : m_(m), ins_(ins) {}

    void require_vtype() const
    {
        if (m_.vtype.vill) illegal("vector instruction with vill set");
    }

    // Checks a register group with the given EMUL and returns its register count.
    unsigned group_emul(unsigned reg, int emul_log2, const char* what) const
    {
        if (emul_log2 < -3 || emul_log2 > 3)
            illegal(std::string(what) + " EMUL out of range at " + m_.vtype.to_string());
        const unsigned n = group_regs(emul_log2);
        if (reg % n != 0) illegal(std::string(what) + " " + vname(reg) + " misaligned for EMUL " + std::to_string(n));
        if (reg + n > 32) illegal(std::string(what) + " group " + vname(reg) + " runs past v31");
        return n;
    }

    // EMUL = EEW / SEW * LMUL
    int emul_for(unsigned eew) const { return log2u(eew) - log2u(m_.vtype.sew) + m_.vtype.lmul_log2; }

    unsigned group(unsigned reg, unsigned eew, const char* what) const
    {
        return group_emul(reg, emul_for(eew), what);
    }

    // Widening destination may overlap a narrower source only in its highest part.
    void widening_overlap(unsigned d, unsigned nd, unsigned s, unsigned ns, int s_emul) const
    {
        if (!overlaps(d, nd, s, ns)) return;
        if (s_emul >= 0 && s == d + nd - ns) return;
        illegal("widening destination " + vname(d) + " overlaps source " + vname(s));
    }

    void no_overlap(unsigned d, unsigned nd, unsigned s, unsigned ns, const char* what) const
    {
        if (overlaps(d, nd, s, ns)) illegal(std::string(what) + " " + vname(s) + " overlaps destination " + vname(d));
    }

    FormatKind fp_for_width(unsigned bits) const
    {
        switch (bits) {
        case 8:
            if (!format_of(m_.mxfmt).is_fp8()) illegal("8-bit FP operation needs an FP8 element format in mxfmt");
            return m_.mxfmt;
        case 16: return m_.fp16alt ? FormatKind::bf16 : FormatKind::fp16;
        case 32: return FormatKind::fp32;
        default: illegal("no FP format of width " + std::to_string(bits));
        }
    }

    void vector_load(unsigned eew)
    {
        require_vtype();
        const unsigned vd = ins_.reg[0];
        group(vd, eew, "load destination");
        const std::uint64_t base = m_.x[ins_.reg[1]];
        for (std::size_t i = 0; i < m_.vl; ++i) m_.set_element(vd, eew, i, m_.load(base + i * (eew / 8), eew / 8));
    }

    void vector_store(unsigned eew)
    {
        require_vtype();
        const unsigned vs = ins_.reg[0];
        group(vs, eew, "store source");
        const std::uint64_t base = m_.x[ins_.reg[1]];
        for (std::size_t i = 0; i < m_.vl; ++i) m_.store(base + i * (eew / 8), eew / 8, m_.element(vs, eew, i));
    }

    void strided_load(unsigned eew)
    {
        require_vtype();
        const unsigned vd = ins_.reg[0];
        group(vd, eew, "load destination");
        const std::uint64_t base = m_.x[ins_.reg[1]];
        const std::int64_t stride = static_cast<std::int32_t>(m_.x[ins_.reg[2]]);
        for (std::size_t i = 0; i < m_.vl; ++i) {
            const std::int64_t addr = static_cast<std::int64_t>(base) + static_cast<std::int64_t>(i) * stride;
            if (addr < 0) throw Error(ErrorCode::memory_fault, "element " + std::to_string(i) + " address is negative");
            m_.set_element(vd, eew, i, m_.load(static_cast<std::uint64_t>(addr), eew / 8));
        }
    }

    void vmv_v_i()
    {
        require_vtype();
        const unsigned sew = m_.vtype.sew;
        group(ins_.reg[0], sew, "destination");
        const std::uint64_t v = static_cast<std::uint64_t>(ins_.imm) & width_mask(sew);
        for (std::size_t i = 0; i < m_.vl; ++i) m_.set_element(ins_.reg[0], sew, i, v);
    }

    // vd (2*SEW) from vs2 (SEW), per-element function
    template <typename F>
    void widen_unary(F&& fn)
    {
        require_vtype();
        const unsigned sew = m_.vtype.sew;
        if (sew > 32) illegal("widening from SEW=64");
        const unsigned vd = ins_.reg[0], vs2 = ins_.reg[1];
        const unsigned nd = group(vd, 2 * sew, "destination");
        const unsigned ns = group(vs2, sew, "source");
        widening_overlap(vd, nd, vs2, ns, emul_for(sew));
        for (std::size_t i = 0; i < m_.vl; ++i) m_.set_element(vd, 2 * sew, i, fn(m_.element(vs2, sew, i)));
    }

    void vfwcvt()
    {
        const unsigned sew = m_.vtype.sew;
        const FormatKind src = fp_for_width(sew);
        const FormatKind dst = fp_for_width(2 * sew);
        widen_unary([&](std::uint64_t b) {
            return std::uint64_t(fast_encode(fast_decode(static_cast<std::uint32_t>(b), src), dst));
        });
    }

    void vwadd_vx()
    {
        require_vtype();
        const unsigned sew = m_.vtype.sew;
        if (sew > 32) illegal("widening from SEW=64");
        const unsigned vd = ins_.reg[0], vs2 = ins_.reg[1];
        const unsigned nd = group(vd, 2 * sew, "destination");
        const unsigned ns = group(vs2, sew, "source");
        widening_overlap(vd, nd, vs2, ns, emul_for(sew));
        const std::int64_t s = sign_extend(m_.x[ins_.reg[2]], sew);
        for (std::size_t i = 0; i < m_.vl; ++i) {
            const std::int64_t v = sign_extend(m_.element(vs2, sew, i), sew) + s;
            m_.set_element(vd, 2 * sew, i, static_cast<std::uint64_t>(v) & width_mask(2 * sew));
        }
    }

    template <typename F>
    void single_int(F&& fn)
    {
        require_vtype();
        const unsigned sew = m_.vtype.sew;
        group(ins_.reg[0], sew, "destination");
        group(ins_.reg[1], sew, "source");
        for (std::size_t i = 0; i < m_.vl; ++i)
            m_.set_element(ins_.reg[0], sew, i, fn(m_.element(ins_.reg[1], sew, i), sew) & width_mask(sew));
    }

    void vfmacc(bool scalar)
    {
        require_vtype();
        const unsigned sew = m_.vtype.sew;
        const FormatKind fmt = fp_for_width(sew);
        const unsigned vd = ins_.reg[0], s1 = ins_.reg[1], vs2 = ins_.reg[2];
        group(vd, sew, "destination");
        if (!scalar) group(s1, sew, "vs1");
        group(vs2, sew, "vs2");
        const double a_scalar = scalar ? fast_decode(static_cast<std::uint32_t>(m_.f[s1] & width_mask(sew)), fmt) : 0.0;
        for (std::size_t i = 0; i < m_.vl; ++i) {
            const double a = scalar ? a_scalar : fast_decode(static_cast<std::uint32_t>(m_.element(s1, sew, i)), fmt);
            const double b = fast_decode(static_cast<std::uint32_t>(m_.element(vs2, sew, i)), fmt);
            const double c = fast_decode(static_cast<std::uint32_t>(m_.element(vd, sew, i)), fmt);
            m_.set_element(vd, sew, i, detail::fused_sum(a * b, c, fmt));
        }
    }

    void vfwmacc_vf()
    {
        require_vtype();
        const unsigned sew = m_.vtype.sew;
        const FormatKind src = fp_for_width(sew);
        const FormatKind dst = fp_for_width(2 * sew);
        const unsigned vd = ins_.reg[0], rs1 = ins_.reg[1], vs2 = ins_.reg[2];
        const unsigned nd = group(vd, 2 * sew, "destination");
        const unsigned ns = group(vs2, sew, "vs2");
        widening_overlap(vd, nd, vs2, ns, emul_for(sew));
        const double a = fast_decode(static_cast<std::uint32_t>(m_.f[rs1] & width_mask(sew)), src);
        for (std::size_t i = 0; i < m_.vl; ++i) {
            const double b = fast_decode(static_cast<std::uint32_t>(m_.element(vs2, sew, i)), src);
            const double c = fast_decode(static_cast<std::uint32_t>(m_.element(vd, 2 * sew, i)), dst);
            m_.set_element(vd, 2 * sew, i, detail::fused_sum(a * b, c, dst));
        }
    }

    // vd[i] (2*SEW) += s1[2i]*vs2[2i] + s1[2i+1]*vs2[2i+1]; sources hold 2*vl
    // SEW elements (EMUL = 2*LMUL), the scalar form packs two in rs1.
    void vfwdotp(bool scalar)
    {
        require_vtype();
        const unsigned sew = m_.vtype.sew;
        if (sew > 16) illegal("vfwdotp needs SEW 8 or 16");
        const FormatKind src = fp_for_width(sew);
        const FormatKind dst = fp_for_width(2 * sew);
        const unsigned vd = ins_.reg[0], s1 = ins_.reg[1], vs2 = ins_.reg[2];
        const int wide = m_.vtype.lmul_log2 + 1;
        const unsigned nd = group_emul(vd, wide, "destination");
        const unsigned n2 = group_emul(vs2, wide, "vs2");
        no_overlap(vd, nd, vs2, n2, "source");
        if (!scalar) no_overlap(vd, nd, s1, group_emul(s1, wide, "vs1"), "source");
        const std::uint64_t packed = m_.f[s1];
        const double a0s = fast_decode(static_cast<std::uint32_t>(packed & width_mask(sew)), src);
        const double a1s = fast_decode(static_cast<std::uint32_t>((packed >> sew) & width_mask(sew)), src);
        for (std::size_t i = 0; i < m_.vl; ++i) {
            const double a0 = scalar ? a0s : fast_decode(static_cast<std::uint32_t>(m_.element(s1, sew, 2 * i)), src);
            const double a1 = scalar ? a1s : fast_decode(static_cast<std::uint32_t>(m_.element(s1, sew, 2 * i + 1)), src);
            const double b0 = fast_decode(static_cast<std::uint32_t>(m_.element(vs2, sew, 2 * i)), src);
            const double b1 = fast_decode(static_cast<std::uint32_t>(m_.element(vs2, sew, 2 * i + 1)), src);
            const double c = fast_decode(static_cast<std::uint32_t>(m_.element(vd, 2 * sew, i)), dst);
            m_.set_element(vd, 2 * sew, i, detail::fused_sum3(a0 * b0, a1 * b1, c, dst));
        }
    }

    void vmxdotp()
    {
        require_vtype();
        const Op op = ins_.op;
        const bool scalar = !ins_.is_vmxdotp_vv();
        const unsigned ratio = (op == Op::vmxdotp_vv || op == Op::vmxdotp_vf)   ? 1
                               : (op == Op::vmxdotp_ww || op == Op::vmxdotp_wf) ? 2
                                                                                : 4;
        const unsigned sew = m_.vtype.sew;
        const unsigned flen = m_.config().flen;
        if (sew != 32 && sew != 16) illegal("vmxdotp needs SEW 32 (FP32) or 16 (BF16)");
        if (flen / sew != ratio)
            illegal(std::string(info(op).mnemonic) + " is not defined for FLEN=" + std::to_string(flen) +
                    " with SEW=" + std::to_string(sew));
        const FormatKind acc = sew == 32 ? FormatKind::fp32 : FormatKind::bf16;
        const FormatKind ef = m_.mxfmt;
        const unsigned ebits = static_cast<unsigned>(format_of(ef).total_bits());
        const unsigned k = flen / ebits;

        const unsigned vd = ins_.reg[0], s1 = ins_.reg[1], vs2 = ins_.reg[2], s3 = ins_.reg[3], vs4 = ins_.reg[4];
        const unsigned nd = group(vd, sew, "destination");
        no_overlap(vd, nd, vs2, group(vs2, flen, "vs2"), "element operand");
        no_overlap(vd, nd, vs4, group(vs4, 8, "vs4"), "scale operand");
        if (!scalar) {
            no_overlap(vd, nd, s1, group(s1, flen, "vs1"), "element operand");
            no_overlap(vd, nd, s3, group(s3, 8, "vs3"), "scale operand");
        }

        std::uint8_t a_elems[16];
        std::uint8_t b_elems[16];
        auto unpack = [&](std::uint64_t bits, std::uint8_t* out) {
            for (unsigned j = 0; j < k; ++j) out[j] = static_cast<std::uint8_t>((bits >> (j * ebits)) & width_mask(ebits));
        };
        if (scalar) unpack(m_.f[s1], a_elems);
        const std::uint8_t s3_scalar = static_cast<std::uint8_t>(m_.f[s3] & 0xFF);
        for (std::size_t i = 0; i < m_.vl; ++i) {
            if (!scalar) unpack(m_.element(s1, flen, i), a_elems);
            unpack(m_.element(vs2, flen, i), b_elems);
            const std::uint8_t sa = scalar ? s3_scalar : static_cast<std::uint8_t>(m_.element(s3, 8, i));
            const std::uint8_t sb = static_cast<std::uint8_t>(m_.element(vs4, 8, i));
            const auto accb = static_cast<std::uint32_t>(m_.element(vd, sew, i));
            m_.set_element(vd, sew, i,
                           mx_dot_accumulate(accb, acc, ef, {a_elems, k}, {b_elems, k}, sa, sb));
        }
    }

    void flx(unsigned bytes)
    {
        if (bytes * 8 > m_.config().flen) illegal("FP load wider than FLEN");
        m_.f[ins_.reg[0]] = m_.load(m_.x[ins_.reg[1]] + static_cast<std::uint64_t>(ins_.imm), bytes);
    }

    void fcvt_h_b(unsigned count)
    {
        const FormatKind src = fp_for_width(8);
        const FormatKind dst = fp_for_width(16);
        std::uint64_t out = 0;
        for (unsigned j = 0; j < count; ++j) {
            const auto b = static_cast<std::uint32_t>((m_.f[ins_.reg[1]] >> (8 * j)) & 0xFF);
            out |= std::uint64_t(fast_encode(fast_decode(b, src), dst)) << (16 * j);
        }
        m_.f[ins_.reg[0]] = out;
    }

private:
    VectorMachine& m_;
    const Instruction& ins_;
};

bool branch_taken(Op op, std::uint32_t a, std::uint32_t b)
{
    const auto sa = static_cast<std::int32_t>(a), sb = static_cast<std::int32_t>(b);
    switch (op) {
    case Op::beq: return a == b;
    case Op::bne: return a != b;
    case Op::blt: return sa < sb;
    case Op::bge: return sa >= sb;
    default: return true;
    }
}

} // namespace

std::uint32_t mx_dot_accumulate(std::uint32_t acc_bits, FormatKind acc_fmt, FormatKind elem_fmt,
                                std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                                std::uint8_t s3, std::uint8_t s4)
{
    const detail::QuantumTable& qt = detail::quantum_table(elem_fmt);
    detail::QuantumSum sum;
    for (std::size_t j = 0; j < a.size(); ++j) sum.add_product(qt, a[j], b[j]);
    const ElementFormat& af = format_of(acc_fmt);
    if (s3 == 0xFF || s4 == 0xFF || sum.nan || (sum.pos_inf && sum.neg_inf)) return af.canonical_nan();
    const double c = fast_decode(acc_bits, acc_fmt);
    if (sum.pos_inf || sum.neg_inf) {
        const double inf = std::numeric_limits<double>::infinity();
        return fast_encode(c + (sum.pos_inf ? inf : -inf), acc_fmt);
    }
    // an exactly-zero contribution leaves the accumulator bits (and the sign of zero) alone
    if (sum.units == 0) return acc_bits;
    const int exp = 2 * qt.quantum_exp + int(s3) + int(s4) - 254;
    constexpr __int128 limit = __int128(1) << 53;
    if (sum.units < limit && sum.units > -limit) {
        const double contrib = std::ldexp(static_cast<double>(static_cast<std::int64_t>(sum.units)), exp);
        return detail::fused_sum(contrib, c, acc_fmt);
    }
    const Value contrib = Value::finite(Exact(BigInt(sum.units), exp));
    return encode(exact_add(decode(acc_bits, acc_fmt), contrib), acc_fmt).bits;
}

VectorMachine::VectorMachine(MachineConfig cfg) : cfg_(cfg)
{
    if (cfg_.vlen < 64 || (cfg_.vlen & (cfg_.vlen - 1)) != 0)
        throw Error(ErrorCode::config, "VLEN must be a power of two >= 64");
    if (cfg_.flen != 32 && cfg_.flen != 64) throw Error(ErrorCode::config, "FLEN must be 32 or 64");
    vrf.assign(32 * vlenb(), 0);
    mem.assign(cfg_.memory_bytes, 0);
}

std::uint32_t VectorMachine::set_vl(std::uint64_t avl, VType requested)
{
    const auto vt = make_vtype(requested.sew, requested.lmul_log2, cfg_.vlen, cfg_.flen);
    if (!vt) {
        vtype = VType{};
        vl = 0;
        return 0;
    }
    vtype = *vt;
    vl = static_cast<std::uint32_t>(std::min<std::uint64_t>(avl, vtype.vlmax(cfg_.vlen)));
    return vl;
}

std::uint64_t VectorMachine::element(unsigned base, unsigned eew, std::size_t i) const
{
    const std::size_t bytes = eew / 8;
    const std::size_t off = std::size_t(base) * vlenb() + i * bytes;
    if (off + bytes > vrf.size()) illegal("register access past v31");
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < bytes; ++b) v |= std::uint64_t(vrf[off + b]) << (8 * b);
    return v;
}

void VectorMachine::set_element(unsigned base, unsigned eew, std::size_t i, std::uint64_t bits)
{
    const std::size_t bytes = eew / 8;
    const std::size_t off = std::size_t(base) * vlenb() + i * bytes;
    if (off + bytes > vrf.size()) illegal("register access past v31");
    for (std::size_t b = 0; b < bytes; ++b) vrf[off + b] = static_cast<std::uint8_t>(bits >> (8 * b));
}

std::uint64_t VectorMachine::load(std::uint64_t addr, unsigned bytes) const
{
    if (addr + bytes > mem.size() || addr + bytes < addr) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "load of %u bytes at 0x%llx out of bounds", bytes,
                      static_cast<unsigned long long>(addr));
        throw Error(ErrorCode::memory_fault, buf);
    }
    std::uint64_t v = 0;
    for (unsigned b = 0; b < bytes; ++b) v |= std::uint64_t(mem[addr + b]) << (8 * b);
    return v;
}

void VectorMachine::store(std::uint64_t addr, unsigned bytes, std::uint64_t value)
{
    if (addr + bytes > mem.size() || addr + bytes < addr) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "store of %u bytes at 0x%llx out of bounds", bytes,
                      static_cast<unsigned long long>(addr));
        throw Error(ErrorCode::memory_fault, buf);
    }
    for (unsigned b = 0; b < bytes; ++b) mem[addr + b] = static_cast<std::uint8_t>(value >> (8 * b));
}

void VectorMachine::write_bytes(std::uint64_t addr, std::span<const std::uint8_t> bytes)
{
    if (addr + bytes.size() > mem.size()) throw Error(ErrorCode::memory_fault, "staging write out of bounds");
    std::copy(bytes.begin(), bytes.end(), mem.begin() + static_cast<std::ptrdiff_t>(addr));
}

std::vector<std::uint8_t> VectorMachine::read_bytes(std::uint64_t addr, std::size_t n) const
{
    if (addr + n > mem.size()) throw Error(ErrorCode::memory_fault, "read out of bounds");
    return {mem.begin() + static_cast<std::ptrdiff_t>(addr), mem.begin() + static_cast<std::ptrdiff_t>(addr + n)};
}

std::size_t VectorMachine::execute(const Instruction& ins, std::size_t pc)
{
    Exec ex(*this, ins);
    const auto& r = ins.reg;
    auto setx = [&](unsigned rd, std::uint32_t v) {
        if (rd != 0) x[rd] = v;
    };
    switch (ins.op) {
    case Op::li: setx(r[0], static_cast<std::uint32_t>(ins.imm)); break;
    case Op::addi: setx(r[0], x[r[1]] + static_cast<std::uint32_t>(ins.imm)); break;
    case Op::add: setx(r[0], x[r[1]] + x[r[2]]); break;
    case Op::sub: setx(r[0], x[r[1]] - x[r[2]]); break;
    case Op::slli: setx(r[0], x[r[1]] << (ins.imm & 31)); break;
    case Op::lbu: setx(r[0], static_cast<std::uint32_t>(load(x[r[1]] + static_cast<std::uint64_t>(ins.imm), 1))); break;
    case Op::lw: setx(r[0], static_cast<std::uint32_t>(load(x[r[1]] + static_cast<std::uint64_t>(ins.imm), 4))); break;
    case Op::flb: ex.flx(1); break;
    case Op::flh: ex.flx(2); break;
    case Op::flw: ex.flx(4); break;
    case Op::fld: ex.flx(8); break;
    case Op::fcvt_h_b: ex.fcvt_h_b(1); break;
    case Op::fcvtp_h_b: ex.fcvt_h_b(2); break;
    case Op::beq:
    case Op::bne:
    case Op::blt:
    case Op::bge:
    case Op::j:
        if (ins.target < 0) throw Error(ErrorCode::parse, "unresolved branch target '" + ins.label + "'");
        if (branch_taken(ins.op, x[r[0]], x[r[1]])) return static_cast<std::size_t>(ins.target);
        break;
    case Op::csrwi:
        if (r[0] == static_cast<std::uint8_t>(Csr::mxfmt)) {
            if (ins.imm < 0 || ins.imm > 2) illegal("mxfmt value " + std::to_string(ins.imm) + " (0=e5m2, 1=e4m3, 2=e2m1)");
            mxfmt = static_cast<FormatKind>(ins.imm);
        } else {
            if (ins.imm != 0 && ins.imm != 1) illegal("fp16alt takes 0 or 1");
            fp16alt = ins.imm == 1;
        }
        break;
    case Op::vsetvli: {
        const unsigned rd = r[0], rs1 = r[1];
        std::uint64_t avl;
        if (rs1 != 0) avl = x[rs1];
        else if (rd != 0) avl = std::numeric_limits<std::uint64_t>::max();
        else avl = vl;
        setx(rd, set_vl(avl, ins.vtype));
        break;
    }
    case Op::vle8: ex.vector_load(8); break;
    case Op::vle16: ex.vector_load(16); break;
    case Op::vle32: ex.vector_load(32); break;
    case Op::vle64: ex.vector_load(64); break;
    case Op::vse8: ex.vector_store(8); break;
    case Op::vse16: ex.vector_store(16); break;
    case Op::vse32: ex.vector_store(32); break;
    case Op::vse64: ex.vector_store(64); break;
    case Op::vlse32: ex.strided_load(32); break;
    case Op::vlse64: ex.strided_load(64); break;
    case Op::vmv_v_i: ex.vmv_v_i(); break;
    case Op::vfwcvt_f_f_v: ex.vfwcvt(); break;
    case Op::vwcvtu_x_x_v: ex.widen_unary([](std::uint64_t b) { return b; }); break;
    case Op::vwadd_vx: ex.vwadd_vx(); break;
    case Op::vadd_vx: {
        const std::uint64_t s = x[r[2]];
        ex.single_int([s](std::uint64_t v, unsigned) { return v + s; });
        break;
    }
    case Op::vsll_vi: {
        const auto imm = static_cast<std::uint64_t>(ins.imm);
        ex.single_int([imm](std::uint64_t v, unsigned sew) { return v << (imm & (sew - 1)); });
        break;
    }
    case Op::vfmacc_vv: ex.vfmacc(false); break;
    case Op::vfmacc_vf: ex.vfmacc(true); break;
    case Op::vfwmacc_vf: ex.vfwmacc_vf(); break;
    case Op::vfwdotp_vv: ex.vfwdotp(false); break;
    case Op::vfwdotp_vf: ex.vfwdotp(true); break;
    case Op::vmxdotp_vv:
    case Op::vmxdotp_ww:
    case Op::vmxdotp_qq:
    case Op::vmxdotp_vf:
    case Op::vmxdotp_wf:
    case Op::vmxdotp_qf: ex.vmxdotp(); break;
    case Op::count_: illegal("invalid opcode");
    }
    if (cfg_.flen < 64)
        for (auto& fr : f) fr &= width_mask(cfg_.flen);
    return pc + 1;
}

RunResult run_program(VectorMachine& m, const Program& prog, const RunOptions& opts)
{
    RunResult res;
    std::size_t pc = 0;
    while (pc < prog.code.size()) {
        const Instruction& ins = prog.code[pc];
        if (res.retired >= opts.max_steps)
            throw ExecutionError(ErrorCode::config, pc, "step limit reached at instruction " + std::to_string(pc),
                                 register_dump_json(m));
        if (opts.record_trace) res.trace.push_back({static_cast<std::uint32_t>(pc), m.vtype, m.vl});
        try {
            pc = m.execute(ins, pc);
        } catch (const Error& e) {
            throw ExecutionError(e.code(), pc,
                                 "instruction " + std::to_string(pc) + " (" + format_instruction(ins) + "): " + e.what(),
                                 register_dump_json(m));
        }
        ++res.retired;
    }
    return res;
}

std::string register_dump_json(const VectorMachine& m, int indent)
{
    auto hex = [](const std::uint8_t* p, std::size_t n) {
        static const char* digits = "0123456789abcdef";
        std::string s;
        s.reserve(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(digits[p[i] >> 4]);
            s.push_back(digits[p[i] & 15]);
        }
        return s;
    };
    nlohmann::ordered_json j;
    j["vlen"] = m.config().vlen;
    j["flen"] = m.config().flen;
    j["vtype"] = {{"sew", m.vtype.sew}, {"lmul_log2", m.vtype.lmul_log2}, {"vill", m.vtype.vill},
                  {"text", m.vtype.to_string()}};
    j["vl"] = m.vl;
    j["csr"] = {{"mxfmt", std::string(name(m.mxfmt))}, {"fp16alt", m.fp16alt ? 1 : 0}};
    auto& xs = j["x"] = nlohmann::ordered_json::object();
    for (unsigned i = 0; i < 32; ++i) xs[std::string(xreg_name(i))] = m.x[i];
    auto& fs = j["f"] = nlohmann::ordered_json::object();
    for (unsigned i = 0; i < 32; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(m.f[i]));
        fs[std::string(freg_name(i))] = buf;
    }
    // vector registers as little-endian byte strings (byte 0 first)
    auto& vs = j["v"] = nlohmann::ordered_json::array();
    for (unsigned i = 0; i < 32; ++i) vs.push_back(hex(m.vrf.data() + std::size_t(i) * m.vlenb(), m.vlenb()));
    return j.dump(indent);
}

DenseMatrix read_vector(const VectorMachine& m, unsigned base, std::size_t count, FormatKind fmt)
{
    const unsigned bits = static_cast<unsigned>(format_of(fmt).total_bits());
    if (bits != 16 && bits != 32) throw Error(ErrorCode::config, "register dumps support FP32, BF16 and FP16");
    DenseMatrix d(1, count, fmt);
    for (std::size_t i = 0; i < count; ++i) d.bits[i] = static_cast<std::uint32_t>(m.element(base, bits, i));
    return d;
}

} // namespace mx::rvv
