#pragma once

#include "mx/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>

namespace mx {

// Format codes stored in the MXT1 header.
enum class TensorCode : std::uint8_t {
    e5m2 = 0,
    e4m3 = 1,
    e2m1 = 2,
    fp32 = 3,
    bf16 = 4,
    fp16 = 5,
};

TensorCode tensor_code(FormatKind fmt);
FormatKind tensor_format(TensorCode code);

using Tensor = std::variant<DenseMatrix, MxMatrix>;

// MXT1 layout (little-endian):
//   0  "MXT1"
//   4  u8 format code, u8 block size k, u8 block axis, u8 reserved (0)
//   8  u32 rows, u32 cols
//   16 element payload, row-major (FP8: 1 byte, FP4: 2 per byte low nibble first,
//      FP32: 4 bytes, BF16/FP16: 2 bytes)
//   .. scale payload, row-major scale matrix (MX tensors only)
// Dense tensors use k = 0 and axis = 0.
void write_tensor(std::ostream& out, const MxMatrix& m);
void write_tensor(std::ostream& out, const DenseMatrix& m);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// FP4 packing shared with the kernel staging code.
std::vector<std::uint8_t> pack_nibbles(std::span<const std::uint8_t> codes);
std::vector<std::uint8_t> unpack_nibbles(std::span<const std::uint8_t> bytes, std::size_t count);

} // namespace mx
