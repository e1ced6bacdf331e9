#include "mx/kernels.hpp"

#include "mx/error.hpp"
#include "mx/tensor_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>

namespace mx::kernels {

using rvv::Builder;
using rvv::Op;
using namespace rvv::reg;

namespace {

constexpr std::size_t region_align = 64;

std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

Error config_error(const std::string& what) { return Error(ErrorCode::config, what); }

unsigned bits_of(FormatKind f) { return static_cast<unsigned>(format_of(f).total_bits()); }

// Bytes of `n` packed elements.
std::size_t elem_bytes(FormatKind f, std::size_t n) { return f == FormatKind::fp4_e2m1 ? (n + 1) / 2 : n; }

std::int64_t mxfmt_code(FormatKind f)
{
    switch (f) {
    case FormatKind::fp8_e5m2: return 0;
    case FormatKind::fp8_e4m3: return 1;
    case FormatKind::fp4_e2m1: return 2;
    default: throw config_error(std::string(mx::name(f)) + " is not an MX element format");
    }
}

// SEW and LMUL (log2) of the accumulator vectors for each kernel.
struct AccShape {
    unsigned sew;
    int lmul_log2;
};

AccShape acc_shape(KernelKind kind, FormatKind acc)
{
    const bool bf = acc == FormatKind::bf16;
    switch (kind) {
    case KernelKind::vmxdotp: return bf ? AccShape{16, 0} : AccShape{32, 1};
    default: return bf ? AccShape{16, 1} : AccShape{32, 2};
    }
}

std::size_t default_m_tile(KernelKind kind)
{
    switch (kind) {
    case KernelKind::vmxdotp: return 8;
    case KernelKind::plain_fp32:
    case KernelKind::plain_bf16: return 4;
    default: return 2;
    }
}

// Inner-loop steps before unrolling: elements (rvv), element pairs (spatz),
// hardware blocks (vmxdotp) per software block, or N for plain kernels.
std::size_t inner_steps(const KernelConfig& c)
{
    switch (c.kind) {
    case KernelKind::rvv_baseline: return c.k_sw;
    case KernelKind::spatz_baseline: return c.k_sw / 2;
    case KernelKind::vmxdotp: return c.k_sw / hardware_k(c.elem, c.flen);
    default: return c.N;
    }
}

std::size_t default_unroll(const KernelConfig& c)
{
    const std::size_t steps = inner_steps(c);
    std::size_t u = 1;
    switch (c.kind) {
    case KernelKind::spatz_baseline: u = c.acc == FormatKind::bf16 ? 2 : 1; break;
    case KernelKind::vmxdotp: u = std::min<std::size_t>(steps, 4); break;
    default: u = 2; break;
    }
    while (steps % u != 0) --u;
    return u;
}

// Aligned vector register groups handed out from v0 upwards.
class VAlloc {
public:
    explicit VAlloc(std::map<std::string, unsigned>& map) : map_(map) {}
    unsigned take(const std::string& role, unsigned regs)
    {
        next_ = static_cast<unsigned>(align_up(next_, regs));
        if (next_ + regs > 32)
            throw config_error("vector register file exhausted allocating '" + role +
                               "'; reduce m_tile or unroll");
        map_[role] = next_;
        const unsigned r = next_;
        next_ += regs;
        return r;
    }

private:
    std::map<std::string, unsigned>& map_;
    unsigned next_ = 0;
};

class FAlloc {
public:
    unsigned take()
    {
        if (next_ >= 32) throw config_error("FP register file exhausted; reduce m_tile or unroll");
        return next_++;
    }

private:
    unsigned next_ = 0;
};

unsigned group_regs(int lmul_log2) { return lmul_log2 <= 0 ? 1u : 1u << lmul_log2; }

Op vle(unsigned eew)
{
    switch (eew) {
    case 8: return Op::vle8;
    case 16: return Op::vle16;
    case 32: return Op::vle32;
    default: return Op::vle64;
    }
}

Op vse(unsigned eew)
{
    switch (eew) {
    case 8: return Op::vse8;
    case 16: return Op::vse16;
    case 32: return Op::vse32;
    default: return Op::vse64;
    }
}

void add_region(KernelProgram& kp, std::size_t& cursor, const std::string& name, std::size_t bytes,
                const std::string& layout)
{
    cursor = align_up(cursor, region_align);
    kp.regions.push_back({name, cursor, bytes, layout});
    cursor += bytes;
}

void finish_layout(KernelProgram& kp, std::size_t cursor)
{
    kp.memory_bytes = std::max<std::size_t>(align_up(cursor, 4096), 128 * 1024);
}

struct Tile {
    std::size_t m0, rows, p0, pe;
};

std::vector<Tile> tiles_of(const KernelConfig& c)
{
    std::vector<Tile> out;
    for (std::size_t m0 = 0; m0 < c.M; m0 += c.m_tile)
        for (std::size_t p0 = 0; p0 < c.P; p0 += c.p_tile)
            out.push_back({m0, std::min(c.m_tile, c.M - m0), p0, std::min(c.p_tile, c.P - p0)});
    return out;
}

std::int64_t imm(std::size_t v) { return static_cast<std::int64_t>(v); }

// Inner loop scaffolding: the body is emitted once; a counted loop wraps it
// unless it runs a single time.
template <typename Body>
void counted_loop(Builder& b, std::size_t trip, const std::string& stem, Body&& body)
{
    if (trip <= 1) {
        body();
        return;
    }
    const std::string l = b.fresh_label(stem);
    b.li(t5, 0);
    b.label(l);
    body();
    b.addi(t5, t5, 1);
    b.branch(Op::bne, t5, t6, l);
}

void store_rows(Builder& b, const KernelProgram& kp, const Tile& t, const std::vector<unsigned>& acc,
                unsigned sew)
{
    const auto& C = kp.region("C");
    const std::size_t w = sew / 8;
    for (std::size_t r = 0; r < t.rows; ++r) {
        b.li(a4, imm(C.offset + ((t.m0 + r) * kp.config.P + t.p0) * w));
        b.emit(vse(sew), {acc[r], a4});
    }
}

void layout_mx(KernelProgram& kp)
{
    const KernelConfig& c = kp.config;
    const std::size_t nb = c.N / c.k_sw;
    const std::size_t accb = bits_of(c.acc) / 8;
    const std::string en(mx::name(c.elem));
    std::size_t cur = 0;
    add_region(kp, cur, "A", c.M * elem_bytes(c.elem, c.N), "M x N " + en + ", row-major");
    add_region(kp, cur, "As", c.M * nb, "M x N_block E8M0, row-major");
    switch (c.kind) {
    case KernelKind::rvv_baseline:
        add_region(kp, cur, "B", c.N * c.P, "N x P " + en + ", row-major");
        break;
    case KernelKind::spatz_baseline:
        add_region(kp, cur, "B", c.N * c.P,
                   "N/2 x P x 2 " + en + ", row pairs interleaved per column");
        break;
    default:
        add_region(kp, cur, "B", c.P * elem_bytes(c.elem, c.N), "N x P " + en + ", column-major");
        break;
    }
    add_region(kp, cur, "Bs", nb * c.P, "N_block x P E8M0, row-major");
    add_region(kp, cur, "C", c.M * c.P * accb, "M x P " + std::string(mx::name(c.acc)) + ", row-major");
    finish_layout(kp, cur);
}

// Scale step shared by both baselines: expand Bs to the accumulator format,
// add the bias-removed A scale and fold the partial sums into the accumulators.
// Expects vtype e8,m1 on entry.
void emit_scale_step(Builder& b, const KernelConfig& c, const Tile& t, unsigned bs8, unsigned bs16,
                     unsigned scale, const std::vector<unsigned>& acc, const std::vector<unsigned>& part)
{
    const bool bf = c.acc == FormatKind::bf16;
    const std::size_t nb = c.N / c.k_sw;
    b.emit(Op::vle8, {bs8, a3});
    b.emit(Op::vwcvtu_x_x_v, {bs16, bs8});
    if (bf) b.vsetvli(zero, t0, 16, 1);
    for (std::size_t r = 0; r < t.rows; ++r) {
        b.emit(Op::lbu, {t1, a2}, imm(r * nb));
        b.addi(t1, t1, -127);
        if (bf) {
            b.emit(Op::vadd_vx, {scale, bs16, t1});
            b.emit(Op::vsll_vi, {scale, scale}, 7);
        } else {
            b.vsetvli(zero, t0, 16, 1);
            b.emit(Op::vwadd_vx, {scale, bs16, t1});
            b.vsetvli(zero, t0, 32, 2);
            b.emit(Op::vsll_vi, {scale, scale}, 23);
        }
        b.emit(Op::vfmacc_vv, {acc[r], part[r], scale});
    }
}

KernelProgram start(const KernelConfig& cfg, KernelKind expected)
{
    KernelProgram kp;
    kp.config = resolve(cfg);
    if (kp.config.kind != expected &&
        !(expected == KernelKind::plain_fp32 && kp.config.kind == KernelKind::plain_bf16))
        throw config_error("builder called with kernel kind " + std::string(name(kp.config.kind)));
    kp.unroll = kp.config.unroll;
    kp.inner_trip = inner_steps(kp.config) / kp.unroll;
    kp.tiles = tiles_of(kp.config).size();
    return kp;
}

} // namespace

std::string_view name(KernelKind kind)
{
    switch (kind) {
    case KernelKind::rvv_baseline: return "rvv-baseline";
    case KernelKind::spatz_baseline: return "spatz-baseline";
    case KernelKind::vmxdotp: return "vmxdotp";
    case KernelKind::plain_fp32: return "plain-fp32";
    case KernelKind::plain_bf16: return "plain-bf16";
    }
    return "?";
}

std::optional<KernelKind> parse_kernel(std::string_view text)
{
    std::string s(text);
    std::replace(s.begin(), s.end(), '_', '-');
    for (auto k : {KernelKind::rvv_baseline, KernelKind::spatz_baseline, KernelKind::vmxdotp,
                   KernelKind::plain_fp32, KernelKind::plain_bf16})
        if (s == name(k)) return k;
    return std::nullopt;
}

bool is_mx(KernelKind kind) { return kind != KernelKind::plain_fp32 && kind != KernelKind::plain_bf16; }

std::size_t hardware_k(FormatKind elem, unsigned flen)
{
    if (!format_of(elem).is_element())
        throw config_error(std::string(mx::name(elem)) + " is not an MX element format");
    return flen / bits_of(elem);
}

KernelConfig KernelConfig::from_json(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("kernel config: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::parse, "kernel config must be a JSON object");
    KernelConfig c;
    static const std::vector<std::string> known{"kind", "M", "N", "P", "k_sw", "m_tile", "p_tile",
                                                "unroll", "elem", "acc", "flen", "vlen"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw Error(ErrorCode::parse, "kernel config: unknown key '" + key + "'");
    try {
        if (j.contains("kind")) {
            const auto k = parse_kernel(j["kind"].get<std::string>());
            if (!k) throw Error(ErrorCode::config, "unknown kernel kind " + j["kind"].dump());
            c.kind = *k;
        }
        auto fmt = [&](const char* key, FormatKind& out) {
            if (!j.contains(key)) return;
            const auto f = parse_format(j[key].get<std::string>());
            if (!f) throw Error(ErrorCode::config, std::string("unknown format for ") + key);
            out = *f;
        };
        fmt("elem", c.elem);
        fmt("acc", c.acc);
        auto num = [&](const char* key, auto& out) {
            if (j.contains(key)) out = j[key].get<std::remove_reference_t<decltype(out)>>();
        };
        num("M", c.M);
        num("N", c.N);
        num("P", c.P);
        num("k_sw", c.k_sw);
        num("m_tile", c.m_tile);
        num("p_tile", c.p_tile);
        num("unroll", c.unroll);
        num("flen", c.flen);
        num("vlen", c.vlen);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("kernel config: ") + e.what());
    }
    return c;
}

std::string KernelConfig::to_json(int indent) const
{
    nlohmann::ordered_json j;
    j["kind"] = std::string(name(kind));
    j["M"] = M;
    j["N"] = N;
    j["P"] = P;
    j["k_sw"] = k_sw;
    j["m_tile"] = m_tile;
    j["p_tile"] = p_tile;
    j["unroll"] = unroll;
    j["elem"] = std::string(mx::name(elem));
    j["acc"] = std::string(mx::name(acc));
    j["flen"] = flen;
    j["vlen"] = vlen;
    return j.dump(indent);
}

KernelConfig resolve(const KernelConfig& cfg)
{
    KernelConfig c = cfg;
    if (c.kind == KernelKind::plain_fp32) c.acc = FormatKind::fp32;
    if (c.kind == KernelKind::plain_bf16) c.acc = FormatKind::bf16;
    if (c.acc != FormatKind::fp32 && c.acc != FormatKind::bf16)
        throw config_error("accumulator must be fp32 or bf16");
    if (c.M == 0 || c.N == 0 || c.P == 0) throw config_error("M, N and P must be positive");
    if (c.flen != 32 && c.flen != 64) throw config_error("FLEN must be 32 or 64");
    if (c.vlen < 128 || c.vlen > 65536 || !std::has_single_bit(c.vlen))
        throw config_error("VLEN must be a power of two between 128 and 65536");

    if (is_mx(c.kind)) {
        if (!format_of(c.elem).is_element())
            throw config_error(std::string(mx::name(c.elem)) + " is not an MX element format");
        if ((c.kind == KernelKind::rvv_baseline || c.kind == KernelKind::spatz_baseline) &&
            !format_of(c.elem).is_fp8())
            throw config_error(std::string(name(c.kind)) + " supports FP8 elements only");
        if (c.k_sw == 0 || c.N % c.k_sw != 0)
            throw config_error("N=" + std::to_string(c.N) + " is not divisible by k_sw=" + std::to_string(c.k_sw));
        if (c.kind == KernelKind::vmxdotp) {
            const std::size_t k = hardware_k(c.elem, c.flen);
            if (c.k_sw % k != 0)
                throw config_error("k_sw=" + std::to_string(c.k_sw) + " is not a multiple of the hardware block size " +
                                   std::to_string(k));
        }
        if (c.kind == KernelKind::spatz_baseline && c.k_sw % 2 != 0)
            throw config_error("spatz-baseline needs an even k_sw");
    }

    const AccShape s = acc_shape(c.kind, c.acc);
    const auto vt = rvv::make_vtype(s.sew, s.lmul_log2, c.vlen, c.flen);
    if (!vt) throw config_error("accumulator vtype is illegal for this VLEN/FLEN");
    const std::size_t vlmax = vt->vlmax(c.vlen);
    if (c.p_tile == 0) c.p_tile = vlmax;
    if (c.p_tile > vlmax)
        throw config_error("P_tile=" + std::to_string(c.p_tile) + " exceeds VLMAX=" + std::to_string(vlmax) +
                           " at e" + std::to_string(s.sew) + "," + vt->to_string().substr(vt->to_string().find(',') + 1));
    if (c.m_tile == 0) c.m_tile = default_m_tile(c.kind);
    if (c.unroll == 0) c.unroll = default_unroll(c);
    if (inner_steps(c) % c.unroll != 0)
        throw config_error("unroll=" + std::to_string(c.unroll) + " does not divide the " +
                           std::to_string(inner_steps(c)) + " inner-loop steps");
    return c;
}

const MemoryRegion& KernelProgram::region(std::string_view n) const
{
    for (const auto& r : regions)
        if (r.name == n) return r;
    throw Error(ErrorCode::config, "kernel has no memory region " + std::string(n));
}

rvv::MachineConfig KernelProgram::machine_config() const
{
    return {config.vlen, config.flen, memory_bytes};
}

KernelProgram build_rvv_baseline(const KernelConfig& cfg)
{
    KernelProgram kp = start(cfg, KernelKind::rvv_baseline);
    const KernelConfig& c = kp.config;
    layout_mx(kp);
    const bool bf = c.acc == FormatKind::bf16;
    const AccShape s = acc_shape(c.kind, c.acc);
    const unsigned gr = group_regs(s.lmul_log2);
    const std::size_t u = kp.unroll, nbuf = u >= 2 ? 2 : 1, nb = c.N / c.k_sw;

    VAlloc va(kp.vregs);
    std::vector<unsigned> acc, part, b8, b16;
    for (std::size_t r = 0; r < c.m_tile; ++r) acc.push_back(va.take("acc" + std::to_string(r), gr));
    for (std::size_t r = 0; r < c.m_tile; ++r) part.push_back(va.take("partial" + std::to_string(r), gr));
    const unsigned scale = va.take("scale", gr);
    const unsigned bs8 = va.take("bs8", 1);
    const unsigned bs16 = va.take("bs16", 2);
    for (std::size_t i = 0; i < nbuf; ++i) {
        b8.push_back(va.take("b8_" + std::to_string(i), 1));
        b16.push_back(va.take("b16_" + std::to_string(i), 2));
    }
    FAlloc fa;
    std::vector<std::vector<unsigned>> raw(c.m_tile), cvt(c.m_tile);
    for (std::size_t r = 0; r < c.m_tile; ++r)
        for (std::size_t e = 0; e < u; ++e) raw[r].push_back(fa.take()), cvt[r].push_back(fa.take());

    const auto& A = kp.region("A");
    const auto& As = kp.region("As");
    const auto& B = kp.region("B");
    const auto& Bs = kp.region("Bs");

    Builder b;
    b.csrwi(rvv::Csr::mxfmt, mxfmt_code(c.elem));
    b.csrwi(rvv::Csr::fp16alt, bf ? 1 : 0);
    b.li(t3, imm(nb));
    b.li(t6, imm(kp.inner_trip));
    for (const Tile& t : tiles_of(c)) {
        b.li(t0, imm(t.pe));
        b.vsetvli(zero, t0, s.sew, s.lmul_log2);
        for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::vmv_v_i, {acc[r]}, 0);
        b.li(a0, imm(A.offset + t.m0 * c.N));
        b.li(a1, imm(B.offset + t.p0));
        b.li(a2, imm(As.offset + t.m0 * nb));
        b.li(a3, imm(Bs.offset + t.p0));
        b.li(t4, 0);
        const std::string blk = b.fresh_label("block");
        b.label(blk);
        for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::vmv_v_i, {part[r]}, 0);
        counted_loop(b, kp.inner_trip, "elem", [&] {
            for (std::size_t e = 0; e < u; ++e)
                for (std::size_t r = 0; r < t.rows; ++r)
                    b.emit(Op::flb, {raw[r][e], a0}, imm(r * c.N + e));
            for (std::size_t e = 0; e < u; ++e)
                for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::fcvt_h_b, {cvt[r][e], raw[r][e]});
            for (std::size_t e0 = 0; e0 < u; e0 += nbuf) {
                const std::size_t e1 = std::min(u, e0 + nbuf);
                b.vsetvli(zero, t0, 8, 0);
                for (std::size_t e = e0; e < e1; ++e) {
                    b.emit(Op::vle8, {b8[e - e0], a1});
                    b.addi(a1, a1, imm(c.P));
                    b.emit(Op::vfwcvt_f_f_v, {b16[e - e0], b8[e - e0]});
                }
                b.vsetvli(zero, t0, 16, 1);
                for (std::size_t e = e0; e < e1; ++e)
                    for (std::size_t r = 0; r < t.rows; ++r)
                        b.emit(bf ? Op::vfmacc_vf : Op::vfwmacc_vf, {part[r], cvt[r][e], b16[e - e0]});
            }
            b.addi(a0, a0, imm(u));
        });
        b.vsetvli(zero, t0, 8, 0);
        emit_scale_step(b, c, t, bs8, bs16, scale, acc, part);
        b.addi(a2, a2, 1);
        b.addi(a3, a3, imm(c.P));
        b.addi(t4, t4, 1);
        b.branch(Op::bne, t4, t3, blk);
        store_rows(b, kp, t, acc, s.sew);
    }
    kp.program = b.finish();
    return kp;
}

KernelProgram build_spatz_baseline(const KernelConfig& cfg)
{
    KernelProgram kp = start(cfg, KernelKind::spatz_baseline);
    const KernelConfig& c = kp.config;
    layout_mx(kp);
    const bool bf = c.acc == FormatKind::bf16;
    const AccShape s = acc_shape(c.kind, c.acc);
    const unsigned gr = group_regs(s.lmul_log2);
    const std::size_t u = kp.unroll, nbuf = u >= 2 ? 2 : 1, nb = c.N / c.k_sw;

    VAlloc va(kp.vregs);
    std::vector<unsigned> acc, part, b8, bw;
    for (std::size_t r = 0; r < c.m_tile; ++r) acc.push_back(va.take("acc" + std::to_string(r), gr));
    for (std::size_t r = 0; r < c.m_tile; ++r) part.push_back(va.take("partial" + std::to_string(r), gr));
    const unsigned scale = va.take("scale", gr);
    const unsigned bs8 = va.take("bs8", 1);
    const unsigned bs16 = va.take("bs16", 2);
    for (std::size_t i = 0; i < nbuf; ++i) {
        // BF16: FP8 pairs loaded as 16-bit elements (2 regs). FP32: FP8 pairs
        // (2 regs) widened to FP16 pairs (4 regs).
        if (bf) {
            bw.push_back(va.take("bpair" + std::to_string(i), 2));
        } else {
            b8.push_back(va.take("b8_" + std::to_string(i), 2));
            bw.push_back(va.take("b16_" + std::to_string(i), 4));
        }
    }
    FAlloc fa;
    std::vector<std::vector<unsigned>> raw(c.m_tile), cvt(c.m_tile);
    for (std::size_t r = 0; r < c.m_tile; ++r)
        for (std::size_t e = 0; e < u; ++e) {
            raw[r].push_back(fa.take());
            if (!bf) cvt[r].push_back(fa.take());
        }

    const auto& A = kp.region("A");
    const auto& As = kp.region("As");
    const auto& B = kp.region("B");
    const auto& Bs = kp.region("Bs");

    Builder b;
    b.csrwi(rvv::Csr::mxfmt, mxfmt_code(c.elem));
    b.csrwi(rvv::Csr::fp16alt, bf ? 1 : 0);
    b.li(t3, imm(nb));
    b.li(t6, imm(kp.inner_trip));
    for (const Tile& t : tiles_of(c)) {
        b.li(t0, imm(t.pe));
        if (!bf) b.li(t2, imm(2 * t.pe));
        b.vsetvli(zero, t0, s.sew, s.lmul_log2);
        for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::vmv_v_i, {acc[r]}, 0);
        b.li(a0, imm(A.offset + t.m0 * c.N));
        b.li(a1, imm(B.offset + 2 * t.p0));
        b.li(a2, imm(As.offset + t.m0 * nb));
        b.li(a3, imm(Bs.offset + t.p0));
        b.li(t4, 0);
        const std::string blk = b.fresh_label("block");
        b.label(blk);
        for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::vmv_v_i, {part[r]}, 0);
        if (bf) b.vsetvli(zero, t0, 8, 0);
        counted_loop(b, kp.inner_trip, "pair", [&] {
            for (std::size_t e = 0; e < u; ++e)
                for (std::size_t r = 0; r < t.rows; ++r)
                    b.emit(Op::flh, {raw[r][e], a0}, imm(r * c.N + 2 * e));
            if (!bf)
                for (std::size_t e = 0; e < u; ++e)
                    for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::fcvtp_h_b, {cvt[r][e], raw[r][e]});
            for (std::size_t e0 = 0; e0 < u; e0 += nbuf) {
                const std::size_t e1 = std::min(u, e0 + nbuf);
                if (!bf) b.vsetvli(zero, t2, 8, 1);
                for (std::size_t e = e0; e < e1; ++e) {
                    if (bf) {
                        b.emit(Op::vle16, {bw[e - e0], a1});
                    } else {
                        b.emit(Op::vle8, {b8[e - e0], a1});
                        b.emit(Op::vfwcvt_f_f_v, {bw[e - e0], b8[e - e0]});
                    }
                    b.addi(a1, a1, imm(2 * c.P));
                }
                if (!bf) b.vsetvli(zero, t0, 16, 1);
                for (std::size_t e = e0; e < e1; ++e)
                    for (std::size_t r = 0; r < t.rows; ++r)
                        b.emit(Op::vfwdotp_vf, {part[r], bf ? raw[r][e] : cvt[r][e], bw[e - e0]});
            }
            b.addi(a0, a0, imm(2 * u));
        });
        if (!bf) b.vsetvli(zero, t0, 8, 0);
        emit_scale_step(b, c, t, bs8, bs16, scale, acc, part);
        b.addi(a2, a2, 1);
        b.addi(a3, a3, imm(c.P));
        b.addi(t4, t4, 1);
        b.branch(Op::bne, t4, t3, blk);
        store_rows(b, kp, t, acc, s.sew);
    }
    kp.program = b.finish();
    return kp;
}

KernelProgram build_vmxdotp(const KernelConfig& cfg)
{
    KernelProgram kp = start(cfg, KernelKind::vmxdotp);
    const KernelConfig& c = kp.config;
    layout_mx(kp);
    const AccShape s = acc_shape(c.kind, c.acc);
    const unsigned gr = group_regs(s.lmul_log2);
    const unsigned ratio = c.flen / s.sew;
    const int elem_lmul = s.lmul_log2 + std::countr_zero(ratio);
    const std::size_t u = kp.unroll, nbuf = u >= 2 ? 2 : 1, nb = c.N / c.k_sw;
    const std::size_t row_bytes = elem_bytes(c.elem, c.N), lane_bytes = c.flen / 8;
    const Op mac = ratio == 1 ? Op::vmxdotp_vf : ratio == 2 ? Op::vmxdotp_wf : Op::vmxdotp_qf;

    VAlloc va(kp.vregs);
    std::vector<unsigned> acc, bel;
    for (std::size_t r = 0; r < c.m_tile; ++r) acc.push_back(va.take("acc" + std::to_string(r), gr));
    for (std::size_t i = 0; i < nbuf; ++i) bel.push_back(va.take("b" + std::to_string(i), group_regs(elem_lmul)));
    const unsigned bs = va.take("bs", 1);
    FAlloc fa;
    std::vector<std::vector<unsigned>> av(c.m_tile);
    std::vector<unsigned> as(c.m_tile);
    for (std::size_t r = 0; r < c.m_tile; ++r) {
        for (std::size_t i = 0; i < nbuf; ++i) av[r].push_back(fa.take());
        as[r] = fa.take();
    }

    const auto& A = kp.region("A");
    const auto& As = kp.region("As");
    const auto& B = kp.region("B");
    const auto& Bs = kp.region("Bs");

    Builder b;
    b.csrwi(rvv::Csr::mxfmt, mxfmt_code(c.elem));
    b.li(t3, imm(nb));
    b.li(t2, imm(row_bytes));
    b.li(t6, imm(kp.inner_trip));
    for (const Tile& t : tiles_of(c)) {
        b.li(t0, imm(t.pe));
        b.vsetvli(zero, t0, s.sew, s.lmul_log2);
        for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::vmv_v_i, {acc[r]}, 0);
        b.li(a0, imm(A.offset + t.m0 * row_bytes));
        b.li(a1, imm(B.offset + t.p0 * row_bytes));
        b.li(a2, imm(As.offset + t.m0 * nb));
        b.li(a3, imm(Bs.offset + t.p0));
        b.li(t4, 0);
        const std::string blk = b.fresh_label("block");
        b.label(blk);
        for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::flb, {as[r], a2}, imm(r * nb));
        b.emit(Op::vle8, {bs, a3});
        counted_loop(b, kp.inner_trip, "hwblock", [&] {
            for (std::size_t e = 0; e < u; ++e) {
                const std::size_t buf = e % nbuf;
                b.emit(c.flen == 64 ? Op::vlse64 : Op::vlse32, {bel[buf], a1, t2});
                b.addi(a1, a1, imm(lane_bytes));
                for (std::size_t r = 0; r < t.rows; ++r)
                    b.emit(c.flen == 64 ? Op::fld : Op::flw, {av[r][buf], a0}, imm(r * row_bytes + e * lane_bytes));
                for (std::size_t r = 0; r < t.rows; ++r)
                    b.emit(mac, {acc[r], av[r][buf], bel[buf], as[r], bs});
            }
            b.addi(a0, a0, imm(u * lane_bytes));
        });
        b.addi(a2, a2, 1);
        b.addi(a3, a3, imm(c.P));
        b.addi(t4, t4, 1);
        b.branch(Op::bne, t4, t3, blk);
        store_rows(b, kp, t, acc, s.sew);
    }
    kp.program = b.finish();
    return kp;
}

KernelProgram build_plain(const KernelConfig& cfg)
{
    KernelProgram kp = start(cfg, KernelKind::plain_fp32);
    const KernelConfig& c = kp.config;
    const bool bf = c.acc == FormatKind::bf16;
    const AccShape s = acc_shape(c.kind, c.acc);
    const unsigned gr = group_regs(s.lmul_log2);
    const std::size_t w = s.sew / 8, u = kp.unroll, nbuf = u >= 2 ? 2 : 1;
    const std::string fn(mx::name(c.acc));

    std::size_t cur = 0;
    add_region(kp, cur, "A", c.M * c.N * w, "M x N " + fn + ", row-major");
    add_region(kp, cur, "B", c.N * c.P * w, "N x P " + fn + ", row-major");
    add_region(kp, cur, "C", c.M * c.P * w, "M x P " + fn + ", row-major");
    finish_layout(kp, cur);

    VAlloc va(kp.vregs);
    std::vector<unsigned> acc, bb;
    for (std::size_t r = 0; r < c.m_tile; ++r) acc.push_back(va.take("acc" + std::to_string(r), gr));
    for (std::size_t i = 0; i < nbuf; ++i) bb.push_back(va.take("b" + std::to_string(i), gr));
    FAlloc fa;
    std::vector<std::vector<unsigned>> av(c.m_tile);
    for (std::size_t r = 0; r < c.m_tile; ++r)
        for (std::size_t i = 0; i < nbuf; ++i) av[r].push_back(fa.take());

    const auto& A = kp.region("A");
    const auto& B = kp.region("B");

    Builder b;
    b.csrwi(rvv::Csr::fp16alt, bf ? 1 : 0);
    b.li(t6, imm(kp.inner_trip));
    for (const Tile& t : tiles_of(c)) {
        b.li(t0, imm(t.pe));
        b.vsetvli(zero, t0, s.sew, s.lmul_log2);
        for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::vmv_v_i, {acc[r]}, 0);
        b.li(a0, imm(A.offset + t.m0 * c.N * w));
        b.li(a1, imm(B.offset + t.p0 * w));
        counted_loop(b, kp.inner_trip, "k", [&] {
            for (std::size_t e = 0; e < u; ++e) {
                const std::size_t buf = e % nbuf;
                b.emit(vle(s.sew), {bb[buf], a1});
                b.addi(a1, a1, imm(c.P * w));
                for (std::size_t r = 0; r < t.rows; ++r)
                    b.emit(bf ? Op::flh : Op::flw, {av[r][buf], a0}, imm((r * c.N + e) * w));
                for (std::size_t r = 0; r < t.rows; ++r) b.emit(Op::vfmacc_vf, {acc[r], av[r][buf], bb[buf]});
            }
            b.addi(a0, a0, imm(u * w));
        });
        store_rows(b, kp, t, acc, s.sew);
    }
    kp.program = b.finish();
    return kp;
}

KernelProgram build(const KernelConfig& cfg)
{
    switch (cfg.kind) {
    case KernelKind::rvv_baseline: return build_rvv_baseline(cfg);
    case KernelKind::spatz_baseline: return build_spatz_baseline(cfg);
    case KernelKind::vmxdotp: return build_vmxdotp(cfg);
    default: return build_plain(cfg);
    }
}

void check_operands(const KernelConfig& cfg, const MxMatrix& a, const MxMatrix& b)
{
    if (!is_mx(cfg.kind))
        throw Error(ErrorCode::config, std::string(name(cfg.kind)) + " takes dense FP32/BF16 operands, not MX tensors");
    if (a.axis() != BlockAxis::along_cols)
        throw Error(ErrorCode::shape, "A must be blocked along its columns (quantize A with --axis cols)");
    if (a.format() != b.format())
        throw Error(ErrorCode::shape, "A and B use different element formats (" + std::string(mx::name(a.format())) +
                                          " vs " + std::string(mx::name(b.format())) + ")");
    if (a.k() != b.k())
        throw Error(ErrorCode::shape, "A and B use different block sizes (k=" + std::to_string(a.k()) + " vs k=" +
                                          std::to_string(b.k()) + ")");
    if (cfg.kind == KernelKind::vmxdotp) {
        if (b.axis() != BlockAxis::along_cols)
            throw Error(ErrorCode::shape,
                        "vmxdotp expects column-major B: a P x N tensor blocked along columns; "
                        "quantize B transposed (mxsim quantize --transpose --axis cols)");
        if (b.cols() != a.cols())
            throw Error(ErrorCode::shape, "inner dimensions differ: A is " + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()) + ", B^T is " + std::to_string(b.rows()) +
                                              "x" + std::to_string(b.cols()));
    } else {
        if (b.axis() != BlockAxis::along_rows)
            throw Error(ErrorCode::shape, std::string(name(cfg.kind)) +
                                              " expects row-major B: an N x P tensor blocked along rows "
                                              "(mxsim quantize --axis rows)");
        if (b.rows() != a.cols())
            throw Error(ErrorCode::shape, "inner dimensions differ: A is " + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()) + ", B is " + std::to_string(b.rows()) + "x" +
                                              std::to_string(b.cols()));
    }
}

MxMatrix reference_b(const MxMatrix& b) { return b.axis() == BlockAxis::along_cols ? b.transposed() : b; }

KernelConfig config_for(KernelConfig base, const MxMatrix& a, const MxMatrix& b)
{
    check_operands(base, a, b);
    base.M = a.rows();
    base.N = a.cols();
    base.P = base.kind == KernelKind::vmxdotp ? b.rows() : b.cols();
    base.k_sw = a.k();
    base.elem = a.format();
    return base;
}

KernelConfig config_for(KernelConfig base, const DenseMatrix& a, const DenseMatrix& b)
{
    if (is_mx(base.kind))
        throw Error(ErrorCode::config, std::string(name(base.kind)) + " takes MX operands");
    if (a.cols != b.rows)
        throw Error(ErrorCode::shape, "inner dimensions differ: A is " + std::to_string(a.rows) + "x" +
                                          std::to_string(a.cols) + ", B is " + std::to_string(b.rows) + "x" +
                                          std::to_string(b.cols));
    base.M = a.rows;
    base.N = a.cols;
    base.P = b.cols;
    return base;
}

void stage(rvv::VectorMachine& m, const KernelProgram& kp, const MxMatrix& a, const MxMatrix& b)
{
    const KernelConfig& c = kp.config;
    if (!is_mx(c.kind)) throw Error(ErrorCode::config, "plain kernels take dense operands");
    if (config_for(c, a, b) != c)
        throw Error(ErrorCode::shape, "operands do not match the kernel configuration");
    const bool fp4 = c.elem == FormatKind::fp4_e2m1;
    auto put = [&](const char* region, const std::vector<std::uint8_t>& bytes) {
        const auto& r = kp.region(region);
        if (bytes.size() != r.bytes) throw Error(ErrorCode::shape, std::string("staging size mismatch for ") + region);
        m.write_bytes(r.offset, bytes);
    };
    put("A", fp4 ? pack_nibbles(a.elements()) : a.elements());
    put("As", a.scales());
    if (c.kind == KernelKind::vmxdotp) {
        put("B", fp4 ? pack_nibbles(b.elements()) : b.elements());
        // Scales of B^T are P x N_block; the kernel reads N_block x P rows.
        const std::size_t nb = c.N / c.k_sw;
        std::vector<std::uint8_t> bs(nb * c.P);
        for (std::size_t p = 0; p < c.P; ++p)
            for (std::size_t j = 0; j < nb; ++j) bs[j * c.P + p] = b.scale(p, j);
        put("Bs", bs);
    } else if (c.kind == KernelKind::spatz_baseline) {
        std::vector<std::uint8_t> bi(c.N * c.P);
        for (std::size_t n = 0; n < c.N; ++n)
            for (std::size_t p = 0; p < c.P; ++p) bi[(n / 2) * 2 * c.P + 2 * p + n % 2] = b.element(n, p);
        put("B", bi);
        put("Bs", b.scales());
    } else {
        put("B", b.elements());
        put("Bs", b.scales());
    }
}

void stage(rvv::VectorMachine& m, const KernelProgram& kp, const DenseMatrix& a, const DenseMatrix& b)
{
    const KernelConfig& c = kp.config;
    if (is_mx(c.kind)) throw Error(ErrorCode::config, "MX kernels take MX operands");
    if (config_for(c, a, b) != c)
        throw Error(ErrorCode::shape, "operands do not match the kernel configuration");
    const unsigned w = bits_of(c.acc) / 8;
    auto put = [&](const char* region, const DenseMatrix& d) {
        const DenseMatrix x = d.format == c.acc ? d : d.converted(c.acc);
        std::vector<std::uint8_t> bytes(x.bits.size() * w);
        for (std::size_t i = 0; i < x.bits.size(); ++i)
            for (unsigned j = 0; j < w; ++j) bytes[i * w + j] = static_cast<std::uint8_t>(x.bits[i] >> (8 * j));
        m.write_bytes(kp.region(region).offset, bytes);
    };
    put("A", a);
    put("B", b);
}

DenseMatrix read_result(const rvv::VectorMachine& m, const KernelProgram& kp)
{
    const KernelConfig& c = kp.config;
    const unsigned w = bits_of(c.acc) / 8;
    DenseMatrix out(c.M, c.P, c.acc);
    const auto bytes = m.read_bytes(kp.region("C").offset, c.M * c.P * w);
    for (std::size_t i = 0; i < out.bits.size(); ++i) {
        std::uint32_t v = 0;
        for (unsigned j = 0; j < w; ++j) v |= std::uint32_t(bytes[i * w + j]) << (8 * j);
        out.bits[i] = v;
    }
    return out;
}

namespace {

template <typename M>
RunOutput run_impl(const KernelProgram& kp, const M& a, const M& b, bool record_trace)
{
    rvv::VectorMachine m(kp.machine_config());
    stage(m, kp, a, b);
    rvv::RunOptions opts;
    opts.record_trace = record_trace;
    auto res = rvv::run_program(m, kp.program, opts);
    return {read_result(m, kp), std::move(res.trace), res.retired};
}

} // namespace

RunOutput run(const KernelProgram& kp, const MxMatrix& a, const MxMatrix& b, bool record_trace)
{
    return run_impl(kp, a, b, record_trace);
}

RunOutput run(const KernelProgram& kp, const DenseMatrix& a, const DenseMatrix& b, bool record_trace)
{
    return run_impl(kp, a, b, record_trace);
}

AccumulationOrder reference_order(const KernelConfig& cfg)
{
    switch (cfg.kind) {
    case KernelKind::vmxdotp: return AccumulationOrder::hardware(hardware_k(cfg.elem, cfg.flen));
    case KernelKind::rvv_baseline: return AccumulationOrder::emulated(1);
    case KernelKind::spatz_baseline: return AccumulationOrder::emulated(2);
    default: throw Error(ErrorCode::config, "plain kernels have no MX accumulation order");
    }
}

DenseMatrix reference(const KernelConfig& cfg, const MxMatrix& a, const MxMatrix& b)
{
    const KernelConfig c = resolve(cfg);
    return mx_matmul_reference(a, reference_b(b), c.acc, reference_order(c));
}

DenseMatrix reference(const KernelConfig& cfg, const DenseMatrix& a, const DenseMatrix& b)
{
    const KernelConfig c = resolve(cfg);
    auto conv = [&](const DenseMatrix& d) { return d.format == c.acc ? d : d.converted(c.acc); };
    return plain_matmul_reference(conv(a), conv(b), c.acc);
}

} // namespace mx::kernels
