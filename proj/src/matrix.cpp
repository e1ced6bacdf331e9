#include "mx/matrix.hpp"

#include "mx/error.hpp"
#include "quantum_dot.hpp"

#include <array>
#include <string>

namespace mx {

DenseMatrix DenseMatrix::from_floats(std::size_t r, std::size_t c, const std::vector<float>& v)
{
    if (v.size() != r * c) throw Error(ErrorCode::shape, "value count does not match rows x cols");
    DenseMatrix m(r, c, FormatKind::fp32);
    for (std::size_t i = 0; i < v.size(); ++i) m.bits[i] = float_to_bits(v[i]);
    return m;
}

std::vector<float> DenseMatrix::to_floats() const
{
    std::vector<float> out(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        out[i] = format == FormatKind::fp32 ? bits_to_float(bits[i])
                                            : bits_to_float(convert({bits[i], format}, FormatKind::fp32).bits);
    }
    return out;
}

DenseMatrix DenseMatrix::converted(FormatKind fmt) const
{
    DenseMatrix out(rows, cols, fmt);
    for (std::size_t i = 0; i < bits.size(); ++i) out.bits[i] = convert({bits[i], format}, fmt).bits;
    return out;
}

MxMatrix::MxMatrix(std::size_t rows, std::size_t cols, std::size_t k, BlockAxis axis, FormatKind fmt)
    : rows_(rows), cols_(cols), k_(k), axis_(axis), format_(fmt)
{
    if (k == 0) throw Error(ErrorCode::shape, "block size k must be at least 1");
    if (!format_of(fmt).is_element()) {
        throw Error(ErrorCode::config, std::string(name(fmt)) + " is not an MX element format");
    }
    const std::size_t blocked = axis == BlockAxis::along_cols ? cols : rows;
    if (blocked % k != 0) {
        throw Error(ErrorCode::shape, "blocked dimension " + std::to_string(blocked) +
                                          " is not divisible by k=" + std::to_string(k));
    }
    elements_.assign(rows * cols, 0);
    scales_.assign(scale_rows() * scale_cols(), 127);
}

std::size_t MxMatrix::blocks_per_line() const
{
    return (axis_ == BlockAxis::along_cols ? cols_ : rows_) / k_;
}

std::uint8_t MxMatrix::scale_at(std::size_t r, std::size_t c) const
{
    return axis_ == BlockAxis::along_cols ? scale(r, c / k_) : scale(r / k_, c);
}

MxBlock MxMatrix::block(std::size_t line, std::size_t b) const
{
    MxBlock blk;
    blk.format = format_;
    blk.elements.resize(k_);
    if (axis_ == BlockAxis::along_cols) {
        blk.scale = scale(line, b);
        for (std::size_t i = 0; i < k_; ++i) blk.elements[i] = element(line, b * k_ + i);
    } else {
        blk.scale = scale(b, line);
        for (std::size_t i = 0; i < k_; ++i) blk.elements[i] = element(b * k_ + i, line);
    }
    return blk;
}

void MxMatrix::set_block(std::size_t line, std::size_t b, const MxBlock& blk)
{
    if (blk.k() != k_ || blk.format != format_) throw Error(ErrorCode::shape, "block does not fit matrix");
    if (axis_ == BlockAxis::along_cols) {
        set_scale(line, b, blk.scale);
        for (std::size_t i = 0; i < k_; ++i) set_element(line, b * k_ + i, blk.elements[i]);
    } else {
        set_scale(b, line, blk.scale);
        for (std::size_t i = 0; i < k_; ++i) set_element(b * k_ + i, line, blk.elements[i]);
    }
}

MxMatrix MxMatrix::transposed() const
{
    const BlockAxis flipped =
        axis_ == BlockAxis::along_cols ? BlockAxis::along_rows : BlockAxis::along_cols;
    MxMatrix t(cols_, rows_, k_, flipped, format_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t.set_element(c, r, element(r, c));
    for (std::size_t sr = 0; sr < scale_rows(); ++sr)
        for (std::size_t sc = 0; sc < scale_cols(); ++sc) t.set_scale(sc, sr, scale(sr, sc));
    return t;
}

DenseMatrix MxMatrix::dequantize() const
{
    DenseMatrix out(rows_, cols_, FormatKind::fp32);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            Value v = decode(element(r, c), format_);
            if (v.is_finite()) v.magnitude = v.magnitude * scale_value(scale_at(r, c));
            out.at(r, c) = encode(v, FormatKind::fp32).bits;
        }
    }
    return out;
}

namespace {

void check_quantize_args(const DenseMatrix& src, std::size_t k, BlockAxis axis)
{
    if (k == 0) throw Error(ErrorCode::shape, "block size k must be at least 1");
    const std::size_t blocked = axis == BlockAxis::along_cols ? src.cols : src.rows;
    if (blocked % k != 0) {
        throw Error(ErrorCode::shape, "dimension " + std::to_string(blocked) +
                                          " is not divisible by k=" + std::to_string(k));
    }
}

void quantize_line(const DenseMatrix& src, MxMatrix& dst, std::size_t line, FormatKind fmt,
                   const QuantizeOptions& opts)
{
    const std::size_t k = dst.k();
    std::vector<float> buf(k);
    for (std::size_t b = 0; b < dst.blocks_per_line(); ++b) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t r = dst.axis() == BlockAxis::along_cols ? line : b * k + i;
            const std::size_t c = dst.axis() == BlockAxis::along_cols ? b * k + i : line;
            const std::uint32_t bits = src.at(r, c);
            buf[i] = src.format == FormatKind::fp32
                         ? bits_to_float(bits)
                         : bits_to_float(convert({bits, src.format}, FormatKind::fp32).bits);
        }
        dst.set_block(line, b, quantize_block(buf, fmt, opts));
    }
}

} // namespace

MxMatrix quantize_matrix_serial(const DenseMatrix& src, FormatKind fmt, std::size_t k,
                                BlockAxis axis, const QuantizeOptions& opts)
{
    check_quantize_args(src, k, axis);
    MxMatrix dst(src.rows, src.cols, k, axis, fmt);
    const std::size_t lines = axis == BlockAxis::along_cols ? src.rows : src.cols;
    for (std::size_t line = 0; line < lines; ++line) quantize_line(src, dst, line, fmt, opts);
    return dst;
}

MxMatrix quantize_matrix(const DenseMatrix& src, FormatKind fmt, std::size_t k, BlockAxis axis,
                         const QuantizeOptions& opts)
{
    check_quantize_args(src, k, axis);
    MxMatrix dst(src.rows, src.cols, k, axis, fmt);
    const auto lines = static_cast<std::int64_t>(axis == BlockAxis::along_cols ? src.rows : src.cols);
    // Lines write disjoint elements and scales; errors are rethrown after the loop.
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::int64_t line = 0; line < lines; ++line) {
        try {
            quantize_line(src, dst, static_cast<std::size_t>(line), fmt, opts);
        } catch (...) {
#pragma omp critical(mx_quantize_error)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return dst;
}

namespace {

void check_matmul_args(const MxMatrix& a, const MxMatrix& b, AccumulationOrder order)
{
    if (a.axis() != BlockAxis::along_cols) {
        throw Error(ErrorCode::shape, "A must be blocked along its columns (reduction axis)");
    }
    if (b.axis() != BlockAxis::along_rows) {
        throw Error(ErrorCode::shape, "B must be blocked along its rows (reduction axis)");
    }
    if (a.cols() != b.rows()) {
        throw Error(ErrorCode::shape, "inner dimensions differ: A has " + std::to_string(a.cols()) +
                                          " columns, B has " + std::to_string(b.rows()) + " rows");
    }
    if (a.k() != b.k()) {
        throw Error(ErrorCode::shape, "block sizes differ: k_A=" + std::to_string(a.k()) +
                                          " k_B=" + std::to_string(b.k()));
    }
    if (a.format() != b.format()) throw Error(ErrorCode::shape, "A and B element formats differ");
    if (order.kind == AccumulationOrder::Kind::per_issue &&
        (order.issue_k == 0 || a.k() % order.issue_k != 0)) {
        throw Error(ErrorCode::config, "issue block size must divide the software block size");
    }
    if (order.kind == AccumulationOrder::Kind::emulated &&
        (order.pair == 0 || a.k() % order.pair != 0)) {
        throw Error(ErrorCode::config, "products per FMA must divide the block size");
    }
}

Value rounded(const Value& v, FormatKind fmt) { return decode(encode(v, fmt).bits, fmt); }

// The expanded scale 2^(sA+sB-254) as the emulation kernel builds it with
// integer instructions; it must be a normal number of the accumulator format.
Value emulated_scale(std::uint8_t sa, std::uint8_t sb)
{
    if (sa == 0xFF || sb == 0xFF) throw Error(ErrorCode::nan_scale, "E8M0 scale 0xFF is NaN");
    const int field = static_cast<int>(sa) + sb - 127;
    if (field <= 0 || field >= 255) {
        throw Error(ErrorCode::range, "combined scale exponent " + std::to_string(field) +
                                          " is outside the normal range of the accumulator");
    }
    return Value::finite(Exact::from_int(1, field - 127));
}

} // namespace

DenseMatrix mx_matmul_reference_serial(const MxMatrix& a, const MxMatrix& b, FormatKind acc,
                                       AccumulationOrder order)
{
    check_matmul_args(a, b, order);
    const std::size_t k = a.k();
    DenseMatrix c(a.rows(), b.cols(), acc);
    for (std::size_t m = 0; m < a.rows(); ++m) {
        for (std::size_t p = 0; p < b.cols(); ++p) {
            Value total = Value::zero();
            for (std::size_t blk = 0; blk < a.blocks_per_line(); ++blk) {
                const MxBlock ab = a.block(m, blk);
                const MxBlock bb = b.block(p, blk);
                switch (order.kind) {
                case AccumulationOrder::Kind::exact: {
                    const Value contrib = mxdp_exact(ab, bb);
                    if (!contrib.is_zero()) total = exact_add(total, contrib);
                    break;
                }
                case AccumulationOrder::Kind::per_issue: {
                    const std::span<const std::uint8_t> ae(ab.elements), be(bb.elements);
                    for (std::size_t lo = 0; lo < k; lo += order.issue_k) {
                        const Value contrib = mxdp_exact(ae.subspan(lo, order.issue_k), ab.scale,
                                                         be.subspan(lo, order.issue_k), bb.scale,
                                                         a.format());
                        if (!contrib.is_zero()) total = rounded(exact_add(total, contrib), acc);
                    }
                    break;
                }
                case AccumulationOrder::Kind::emulated: {
                    Value partial = Value::zero();
                    for (std::size_t lo = 0; lo < k; lo += order.pair) {
                        Value step = partial;
                        for (std::size_t j = lo; j < lo + order.pair; ++j) {
                            step = exact_add(step, exact_mul(decode(ab.elements[j], a.format()),
                                                             decode(bb.elements[j], b.format())));
                        }
                        partial = rounded(step, acc);
                    }
                    const Value scaled = exact_mul(partial, emulated_scale(ab.scale, bb.scale));
                    total = rounded(exact_add(total, scaled), acc);
                    break;
                }
                }
            }
            c.at(m, p) = encode(total, acc).bits;
        }
    }
    return c;
}

DenseMatrix mx_matmul_reference(const MxMatrix& a, const MxMatrix& b, FormatKind acc,
                                AccumulationOrder order)
{
    check_matmul_args(a, b, order);
    const std::size_t k = a.k();
    const std::size_t n_block = a.blocks_per_line();
    const FormatKind fmt = a.format();
    const detail::QuantumTable& qt = detail::quantum_table(fmt);
    std::array<Value, 256> decoded;
    for (std::uint32_t i = 0; i < (1u << format_of(fmt).total_bits()); ++i) decoded[i] = decode(i, fmt);

    DenseMatrix c(a.rows(), b.cols(), acc);
    const auto rows = static_cast<std::int64_t>(a.rows());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t mi = 0; mi < rows; ++mi) {
        try {
            const auto m = static_cast<std::size_t>(mi);
            for (std::size_t p = 0; p < b.cols(); ++p) {
                Value total = Value::zero();
                for (std::size_t blk = 0; blk < n_block; ++blk) {
                    const std::uint8_t sa = a.scale(m, blk);
                    const std::uint8_t sb = b.scale(blk, p);
                    const std::size_t base = blk * k;
                    if (order.kind == AccumulationOrder::Kind::emulated) {
                        Value partial = Value::zero();
                        for (std::size_t lo = 0; lo < k; lo += order.pair) {
                            Value step = partial;
                            for (std::size_t j = base + lo; j < base + lo + order.pair; ++j) {
                                step = exact_add(step, exact_mul(decoded[a.element(m, j)],
                                                                 decoded[b.element(j, p)]));
                            }
                            partial = rounded(step, acc);
                        }
                        total = rounded(exact_add(total, exact_mul(partial, emulated_scale(sa, sb))), acc);
                        continue;
                    }
                    const std::size_t step =
                        order.kind == AccumulationOrder::Kind::per_issue ? order.issue_k : k;
                    for (std::size_t lo = 0; lo < k; lo += step) {
                        Value contrib;
                        if (sa == 0xFF || sb == 0xFF) {
                            contrib = Value::nan();
                        } else {
                            detail::QuantumSum sum;
                            for (std::size_t j = base + lo; j < base + lo + step; ++j) {
                                sum.add_product(qt, a.element(m, j), b.element(j, p));
                            }
                            contrib = sum.value(qt.quantum_exp, static_cast<int>(sa) + sb - 254);
                        }
                        if (contrib.is_zero()) continue;
                        total = exact_add(total, contrib);
                        if (order.kind == AccumulationOrder::Kind::per_issue) total = rounded(total, acc);
                    }
                }
                c.at(m, p) = encode(total, acc).bits;
            }
        } catch (...) {
#pragma omp critical(mx_matmul_error)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return c;
}

DenseMatrix plain_matmul_reference(const DenseMatrix& a, const DenseMatrix& b, FormatKind acc)
{
    if (a.cols != b.rows) throw Error(ErrorCode::shape, "inner dimensions differ");
    DenseMatrix c(a.rows, b.cols, acc);
    for (std::size_t m = 0; m < a.rows; ++m) {
        for (std::size_t p = 0; p < b.cols; ++p) {
            Value total = Value::zero();
            for (std::size_t n = 0; n < a.cols; ++n) {
                const Value prod = exact_mul(decode(a.at(m, n), a.format), decode(b.at(n, p), b.format));
                total = rounded(exact_add(total, prod), acc);
            }
            c.at(m, p) = encode(total, acc).bits;
        }
    }
    return c;
}

} // namespace mx
