#include "mx/tensor_io.hpp"

#include "mx/error.hpp"

#include <boost/endian/conversion.hpp>

#include <array>
#include <fstream>
#include <istream>
#include <ostream>

namespace mx {

namespace {

constexpr std::array<char, 4> magic{'M', 'X', 'T', '1'};
constexpr std::size_t header_bytes = 16;

void put(std::ostream& out, std::span<const std::uint8_t> bytes)
{
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(ErrorCode::io, "tensor write failed");
}

std::vector<std::uint8_t> get(std::istream& in, std::size_t n, const char* what)
{
    std::vector<std::uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw Error(ErrorCode::io, std::string("truncated tensor file: ") + what);
    return buf;
}

void write_header(std::ostream& out, TensorCode code, std::size_t k, BlockAxis axis, std::size_t rows,
                  std::size_t cols)
{
    if (rows > 0xFFFFFFFFu || cols > 0xFFFFFFFFu || k > 0xFF)
        throw Error(ErrorCode::shape, "tensor dimensions do not fit the MXT1 header");
    std::array<std::uint8_t, header_bytes> h{};
    std::copy(magic.begin(), magic.end(), h.begin());
    h[4] = static_cast<std::uint8_t>(code);
    h[5] = static_cast<std::uint8_t>(k);
    h[6] = static_cast<std::uint8_t>(axis);
    boost::endian::store_little_u32(h.data() + 8, static_cast<std::uint32_t>(rows));
    boost::endian::store_little_u32(h.data() + 12, static_cast<std::uint32_t>(cols));
    put(out, h);
}

} // namespace

TensorCode tensor_code(FormatKind fmt)
{
    switch (fmt) {
    case FormatKind::fp8_e5m2: return TensorCode::e5m2;
    case FormatKind::fp8_e4m3: return TensorCode::e4m3;
    case FormatKind::fp4_e2m1: return TensorCode::e2m1;
    case FormatKind::fp32: return TensorCode::fp32;
    case FormatKind::bf16: return TensorCode::bf16;
    case FormatKind::fp16: return TensorCode::fp16;
    case FormatKind::e8m0: break;
    }
    throw Error(ErrorCode::encoding, "E8M0 is not a tensor element format");
}

FormatKind tensor_format(TensorCode code)
{
    switch (code) {
    case TensorCode::e5m2: return FormatKind::fp8_e5m2;
    case TensorCode::e4m3: return FormatKind::fp8_e4m3;
    case TensorCode::e2m1: return FormatKind::fp4_e2m1;
    case TensorCode::fp32: return FormatKind::fp32;
    case TensorCode::bf16: return FormatKind::bf16;
    case TensorCode::fp16: return FormatKind::fp16;
    }
    throw Error(ErrorCode::encoding, "bad tensor format code " + std::to_string(static_cast<int>(code)));
}

std::vector<std::uint8_t> pack_nibbles(std::span<const std::uint8_t> codes)
{
    std::vector<std::uint8_t> out((codes.size() + 1) / 2, 0);
    for (std::size_t i = 0; i < codes.size(); ++i)
        out[i / 2] |= static_cast<std::uint8_t>((codes[i] & 0xF) << (4 * (i % 2)));
    return out;
}

std::vector<std::uint8_t> unpack_nibbles(std::span<const std::uint8_t> bytes, std::size_t count)
{
    if (bytes.size() * 2 < count)
        throw Error(ErrorCode::shape, "not enough packed FP4 data");
    std::vector<std::uint8_t> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = (bytes[i / 2] >> (4 * (i % 2))) & 0xF;
    return out;
}

void write_tensor(std::ostream& out, const MxMatrix& m)
{
    write_header(out, tensor_code(m.format()), m.k(), m.axis(), m.rows(), m.cols());
    if (m.format() == FormatKind::fp4_e2m1)
        put(out, pack_nibbles(m.elements()));
    else
        put(out, m.elements());
    put(out, m.scales());
}

void write_tensor(std::ostream& out, const DenseMatrix& m)
{
    const TensorCode code = tensor_code(m.format);
    if (code != TensorCode::fp32 && code != TensorCode::bf16 && code != TensorCode::fp16)
        throw Error(ErrorCode::encoding, "dense tensors hold FP32, BF16 or FP16");
    write_header(out, code, 0, BlockAxis::along_cols, m.rows, m.cols);
    const unsigned width = code == TensorCode::fp32 ? 4 : 2;
    std::vector<std::uint8_t> buf(m.bits.size() * width);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (width == 4)
            boost::endian::store_little_u32(buf.data() + 4 * i, m.bits[i]);
        else
            boost::endian::store_little_u16(buf.data() + 2 * i, static_cast<std::uint16_t>(m.bits[i]));
    }
    put(out, buf);
}

Tensor read_tensor(std::istream& in)
{
    const auto h = get(in, header_bytes, "header");
    if (!std::equal(magic.begin(), magic.end(), h.begin()))
        throw Error(ErrorCode::io, "not an MXT1 file (bad magic)");
    if (h[4] > static_cast<std::uint8_t>(TensorCode::fp16))
        throw Error(ErrorCode::encoding, "bad tensor format code " + std::to_string(h[4]));
    const FormatKind fmt = tensor_format(static_cast<TensorCode>(h[4]));
    const std::size_t k = h[5];
    const std::size_t rows = boost::endian::load_little_u32(h.data() + 8);
    const std::size_t cols = boost::endian::load_little_u32(h.data() + 12);
    const std::size_t count = rows * cols;

    if (!format_of(fmt).is_element()) {
        if (k != 0)
            throw Error(ErrorCode::io, "dense tensor with nonzero block size");
        DenseMatrix m(rows, cols, fmt);
        const unsigned width = fmt == FormatKind::fp32 ? 4 : 2;
        const auto buf = get(in, count * width, "payload");
        for (std::size_t i = 0; i < count; ++i)
            m.bits[i] = width == 4 ? boost::endian::load_little_u32(buf.data() + 4 * i)
                                   : boost::endian::load_little_u16(buf.data() + 2 * i);
        return m;
    }

    if (h[6] > 1)
        throw Error(ErrorCode::io, "bad block axis " + std::to_string(h[6]));
    // The constructor validates divisibility.
    MxMatrix m(rows, cols, k, static_cast<BlockAxis>(h[6]), fmt);
    if (fmt == FormatKind::fp4_e2m1)
        m.elements() = unpack_nibbles(get(in, (count + 1) / 2, "payload"), count);
    else
        m.elements() = get(in, count, "payload");
    m.scales() = get(in, m.scale_rows() * m.scale_cols(), "scales");
    return m;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
    std::visit([&](const auto& m) { write_tensor(out, m); }, t);
}

Tensor load_tensor(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::io, "cannot open " + path.string());
    return read_tensor(in);
}

} // namespace mx
