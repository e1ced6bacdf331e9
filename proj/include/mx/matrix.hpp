#pragma once

#include "mx/block.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mx {

// Direction the MX blocks run in. A (M x N) is blocked along its columns,
// B (N x P) along its rows, so both are blocked along the reduction axis.
enum class BlockAxis : std::uint8_t {
    along_cols = 0, // scales: rows x (cols / k)
    along_rows = 1, // scales: (rows / k) x cols
};

// Dense matrix of scalar encodings (FP32, BF16 or FP16), row-major.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    FormatKind format = FormatKind::fp32;
    std::vector<std::uint32_t> bits;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, FormatKind fmt)
        : rows(r), cols(c), format(fmt), bits(r * c, 0)
    {
    }
    static DenseMatrix from_floats(std::size_t r, std::size_t c, const std::vector<float>& v);

    std::uint32_t& at(std::size_t r, std::size_t c) { return bits[r * cols + c]; }
    std::uint32_t at(std::size_t r, std::size_t c) const { return bits[r * cols + c]; }
    double value(std::size_t r, std::size_t c) const { return decode(at(r, c), format).to_double(); }
    std::vector<float> to_floats() const;
    // Round every entry into another format (IEEE overflow).
    DenseMatrix converted(FormatKind fmt) const;
};

class MxMatrix {
public:
    MxMatrix() = default;
    MxMatrix(std::size_t rows, std::size_t cols, std::size_t k, BlockAxis axis, FormatKind fmt);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t k() const { return k_; }
    BlockAxis axis() const { return axis_; }
    FormatKind format() const { return format_; }
    // Number of blocks along the blocked axis (N_block = N / k).
    std::size_t blocks_per_line() const;
    std::size_t scale_rows() const { return axis_ == BlockAxis::along_cols ? rows_ : rows_ / k_; }
    std::size_t scale_cols() const { return axis_ == BlockAxis::along_cols ? cols_ / k_ : cols_; }

    std::uint8_t element(std::size_t r, std::size_t c) const { return elements_[r * cols_ + c]; }
    void set_element(std::size_t r, std::size_t c, std::uint8_t bits) { elements_[r * cols_ + c] = bits; }
    // Scale of the block containing (r, c).
    std::uint8_t scale_at(std::size_t r, std::size_t c) const;
    std::uint8_t scale(std::size_t sr, std::size_t sc) const { return scales_[sr * scale_cols() + sc]; }
    void set_scale(std::size_t sr, std::size_t sc, std::uint8_t s) { scales_[sr * scale_cols() + sc] = s; }

    // Block `b` of line `line` (a row for along_cols, a column for along_rows).
    MxBlock block(std::size_t line, std::size_t b) const;
    void set_block(std::size_t line, std::size_t b, const MxBlock& blk);

    // Same blocks, swapped dims and axis: (rows x cols, along_rows) <-> (cols x rows, along_cols).
    MxMatrix transposed() const;

    const std::vector<std::uint8_t>& elements() const { return elements_; }
    const std::vector<std::uint8_t>& scales() const { return scales_; }
    std::vector<std::uint8_t>& elements() { return elements_; }
    std::vector<std::uint8_t>& scales() { return scales_; }

    DenseMatrix dequantize() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t k_ = 1;
    BlockAxis axis_ = BlockAxis::along_cols;
    FormatKind format_ = FormatKind::fp8_e4m3;
    std::vector<std::uint8_t> elements_; // one encoding per entry, row-major
    std::vector<std::uint8_t> scales_;   // row-major scale matrix
};

// Quantize FP32 data into MX blocks along `axis`. The parallel version splits
// lines across OpenMP threads; the serial one is kept as its reference.
MxMatrix quantize_matrix(const DenseMatrix& src, FormatKind fmt, std::size_t k, BlockAxis axis,
                         const QuantizeOptions& opts = {});
MxMatrix quantize_matrix_serial(const DenseMatrix& src, FormatKind fmt, std::size_t k,
                                BlockAxis axis, const QuantizeOptions& opts = {});

// How the reference orders and rounds accumulation of block contributions.
struct AccumulationOrder {
    enum class Kind : std::uint8_t {
        exact,     // exact sum, one rounding at the end
        per_issue, // acc = round(acc + exact(sub-block of issue_k elements)); vmxdotp
        emulated,  // per block: partial = round(partial + sum of `pair` products),
                   // then acc = round(acc + partial * scale); the software kernels
    };
    Kind kind = Kind::exact;
    std::size_t issue_k = 0;
    std::size_t pair = 1;

    static AccumulationOrder exact() { return {Kind::exact, 0, 1}; }
    static AccumulationOrder hardware(std::size_t hw_k) { return {Kind::per_issue, hw_k, 1}; }
    static AccumulationOrder emulated(std::size_t products_per_fma) { return {Kind::emulated, 0, products_per_fma}; }
};

// C = A x B with A (M x N, along_cols) and B (N x P, along_rows).
DenseMatrix mx_matmul_reference(const MxMatrix& a, const MxMatrix& b, FormatKind acc,
                                AccumulationOrder order = AccumulationOrder::exact());
DenseMatrix mx_matmul_reference_serial(const MxMatrix& a, const MxMatrix& b, FormatKind acc,
                                       AccumulationOrder order = AccumulationOrder::exact());

// Plain matmul with one rounding per multiply-accumulate step in acc format:
// C[m][p] = round(C[m][p] + A[m][n] * B[n][p]) for n = 0..N-1.
DenseMatrix plain_matmul_reference(const DenseMatrix& a, const DenseMatrix& b, FormatKind acc);

} // namespace mx
