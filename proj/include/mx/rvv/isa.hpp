#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mx::rvv {

// vtype CSR. LMUL is kept as log2 so fractional values (mf2..mf8) are exact.
struct VType {
    unsigned sew = 8;
    int lmul_log2 = 0; // -3 .. 3
    bool vill = true;

    // VLEN * LMUL / SEW, 0 when vill.
    std::uint32_t vlmax(unsigned vlen) const;
    // "e32,m4", "e8,mf2", "vill"
    std::string to_string() const;

    friend bool operator==(const VType&, const VType&) = default;
};

// A legal vtype for this VLEN/ELEN, or nullopt (the caller sets vill).
std::optional<VType> make_vtype(unsigned sew, int lmul_log2, unsigned vlen, unsigned elen);

enum class Op : std::uint8_t {
    // scalar integer
    li, addi, add, sub, slli, lbu, lw,
    // scalar FP loads and converts
    flb, flh, flw, fld, fcvt_h_b, fcvtp_h_b,
    // control
    beq, bne, blt, bge, j, csrwi,
    // vector configuration and memory
    vsetvli, vle8, vle16, vle32, vle64, vse8, vse16, vse32, vse64, vlse32, vlse64,
    // vector integer and FP
    vmv_v_i, vfwcvt_f_f_v, vwcvtu_x_x_v, vwadd_vx, vadd_vx, vsll_vi,
    vfmacc_vv, vfmacc_vf, vfwmacc_vf, vfwdotp_vv, vfwdotp_vf,
    // MX dot products
    vmxdotp_vv, vmxdotp_ww, vmxdotp_qq, vmxdotp_vf, vmxdotp_wf, vmxdotp_qf,
    count_
};

enum class Unit : std::uint8_t { scalar, vau, vlsu };
enum class WidthClass : std::uint8_t { single, widening, narrowing, quad_narrowing };

struct OpInfo {
    std::string_view mnemonic;
    // One letter per operand in assembly order:
    //   x int reg, f FP reg, v vector reg, i immediate, m off(xreg),
    //   a (xreg), l label, t vtype ("e32, m4"), c CSR name
    std::string_view operands;
    Unit unit;
    WidthClass width;
};

const OpInfo& info(Op op);
std::optional<Op> parse_mnemonic(std::string_view mnemonic);

enum class Csr : std::uint8_t { mxfmt = 0, fp16alt = 1 };

struct Instruction {
    Op op = Op::li;
    // Register operands in assembly order; m and a operands store the base xreg.
    std::array<std::uint8_t, 5> reg{};
    std::int64_t imm = 0;   // immediate, memory offset or CSR value
    VType vtype{};          // vsetvli only
    std::int32_t target = -1; // resolved branch target
    std::string label;      // branch label

    bool is_branch() const;
    bool is_vmxdotp() const;
    bool is_vmxdotp_vv() const; // vector-vector family (vv/ww/qq)
};

struct Program {
    std::vector<Instruction> code;
    std::map<std::string, std::size_t> labels; // label -> index of the next instruction

    // Fills Instruction::target from labels; throws Error(parse) for unknown labels.
    void resolve();
};

// Assembler-style text, one instruction or label per line, '#' comments.
Program parse_program(std::string_view text);
std::string format_instruction(const Instruction& ins);
std::string format_program(const Program& prog);

// ABI names for printing and parsing; "x5"/"f3"/"v8" forms are accepted too.
std::string_view xreg_name(unsigned r);
std::string_view freg_name(unsigned r);

// Incremental program construction for the kernel generators.
class Builder {
public:
    void label(const std::string& name);
    void emit(Op op, std::initializer_list<unsigned> regs, std::int64_t imm = 0);
    void li(unsigned rd, std::int64_t imm) { emit(Op::li, {rd}, imm); }
    void addi(unsigned rd, unsigned rs, std::int64_t imm) { emit(Op::addi, {rd, rs}, imm); }
    void vsetvli(unsigned rd, unsigned avl_reg, unsigned sew, int lmul_log2);
    void branch(Op op, unsigned rs1, unsigned rs2, const std::string& target);
    void csrwi(Csr csr, std::int64_t value) { emit(Op::csrwi, {static_cast<unsigned>(csr)}, value); }
    // Unique label with the given stem.
    std::string fresh_label(const std::string& stem);

    std::size_t size() const { return prog_.code.size(); }
    Program finish();

private:
    Program prog_;
    std::size_t label_counter_ = 0;
};

namespace reg {
// Integer ABI register numbers used by the kernel generators.
inline constexpr unsigned zero = 0, ra = 1, sp = 2, gp = 3, tp = 4;
inline constexpr unsigned t0 = 5, t1 = 6, t2 = 7, s0 = 8, s1 = 9;
inline constexpr unsigned a0 = 10, a1 = 11, a2 = 12, a3 = 13, a4 = 14, a5 = 15, a6 = 16, a7 = 17;
inline constexpr unsigned s2 = 18, s3 = 19, s4 = 20, s5 = 21, s6 = 22, s7 = 23, s8 = 24, s9 = 25;
inline constexpr unsigned s10 = 26, s11 = 27, t3 = 28, t4 = 29, t5 = 30, t6 = 31;
// FP ABI register numbers
inline constexpr unsigned ft0 = 0, ft1 = 1, ft2 = 2, ft3 = 3, ft4 = 4, ft5 = 5, ft6 = 6, ft7 = 7;
inline constexpr unsigned fs0 = 8, fs1 = 9;
inline constexpr unsigned fa0 = 10, fa1 = 11, fa2 = 12, fa3 = 13, fa4 = 14, fa5 = 15, fa6 = 16, fa7 = 17;
inline constexpr unsigned fs2 = 18, fs3 = 19, fs4 = 20, fs5 = 21, fs6 = 22, fs7 = 23, fs8 = 24, fs9 = 25;
inline constexpr unsigned fs10 = 26, fs11 = 27, ft8 = 28, ft9 = 29, ft10 = 30, ft11 = 31;
} // namespace reg

} // namespace mx::rvv
