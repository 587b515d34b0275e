/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===---------------------------- payload.hpp ----------------------------===//
//
// Binary tensor payload files (*.tensor). Layout, all integers little-endian
// regardless of host byte order:
//
//   u32 magic 0x4C4F4F4D | u8 dtype code (1=f32, 7=i64) | u8 rank |
//   u16 reserved (0) | rank x u64 dims | element bytes, little-endian
//
// Encoding and decoding assemble every scalar byte by byte, so the same file
// loads to the same values on big- and little-endian hosts.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/support.hpp"
#include "loom/tensor.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

namespace loom {

inline constexpr std::uint32_t kTensorFileMagic = 0x4C4F4F4Du;

namespace detail {

inline void append_le(std::vector<std::uint8_t> &out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t read_le(std::span<const std::uint8_t> in, std::size_t pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size())
    fail("ParseError", "tensor payload truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_tensor(const TensorValue &value) {
  std::vector<std::uint8_t> out;
  const Shape &shape = value.shape();
  out.reserve(8 + static_cast<std::size_t>(shape.rank()) * 8 +
              static_cast<std::size_t>(value.size()) * byte_width(value.dtype()));
  detail::append_le(out, kTensorFileMagic, 4);
  out.push_back(static_cast<std::uint8_t>(dtype_code(value.dtype())));
  out.push_back(static_cast<std::uint8_t>(shape.rank()));
  detail::append_le(out, 0, 2); // reserved
  for (const DimSize &d : shape.dims())
    detail::append_le(out, static_cast<std::uint64_t>(*d), 8);
  if (value.dtype() == DType::F32) {
    for (float x : value.f32_data())
      detail::append_le(out, std::bit_cast<std::uint32_t>(x), 4);
  } else {
    for (std::int64_t x : value.i64_data())
      detail::append_le(out, std::bit_cast<std::uint64_t>(x), 8);
  }
  return out;
}

inline TensorValue decode_tensor(std::span<const std::uint8_t> bytes) {
  if (detail::read_le(bytes, 0, 4) != kTensorFileMagic)
    fail("ParseError", "bad tensor payload magic");
  DType dtype = dtype_from_code(static_cast<int>(detail::read_le(bytes, 4, 1)));
  int rank = static_cast<int>(detail::read_le(bytes, 5, 1));
  std::size_t pos = 8;
  std::vector<DimSize> dims;
  for (int i = 0; i < rank; ++i) {
    dims.push_back(DimSize(static_cast<std::int64_t>(detail::read_le(bytes, pos, 8))));
    pos += 8;
  }
  Shape shape(std::move(dims));
  std::int64_t count = shape.elem_count();
  std::size_t body = static_cast<std::size_t>(count) * byte_width(dtype);
  if (bytes.size() - pos != body)
    fail("PayloadSizeMismatch", "tensor payload body has " + std::to_string(bytes.size() - pos) +
                                    " bytes, header implies " + std::to_string(body));
  if (dtype == DType::F32) {
    std::vector<float> data(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i)
      data[static_cast<std::size_t>(i)] = std::bit_cast<float>(
          static_cast<std::uint32_t>(detail::read_le(bytes, pos + static_cast<std::size_t>(i) * 4, 4)));
    return TensorValue::f32(std::move(shape), std::move(data));
  }
  std::vector<std::int64_t> data(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i)
    data[static_cast<std::size_t>(i)] = std::bit_cast<std::int64_t>(
        detail::read_le(bytes, pos + static_cast<std::size_t>(i) * 8, 8));
  return TensorValue::i64(std::move(shape), std::move(data));
}

inline void write_tensor_file(const std::filesystem::path &path, const TensorValue &value) {
  std::vector<std::uint8_t> bytes = encode_tensor(value);
  std::ofstream os(path, std::ios::binary);
  if (!os)
    fail("IoError", "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os)
    fail("IoError", "short write to " + path.string());
}

inline TensorValue read_tensor_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    fail("IoError", "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

} // namespace loom
