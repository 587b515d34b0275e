/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===----------------------------- tensor.hpp ----------------------------===//
//
// Element types, optionally-ranked shapes, and dense row-major tensor
// values. Every other component builds on these.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/support.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace loom {

enum class DType : std::uint8_t { F32, I64 };

inline std::size_t byte_width(DType t) { return t == DType::F32 ? 4 : 8; }

inline const char *dtype_name(DType t) { return t == DType::F32 ? "f32" : "i64"; }

/// On-disk / manifest element type codes (the ONNX numbering).
inline int dtype_code(DType t) { return t == DType::F32 ? 1 : 7; }

inline DType dtype_from_code(int code) {
  switch (code) {
  case 1:
    return DType::F32;
  case 7:
    return DType::I64;
  default:
    fail("UnsupportedDtype",
         "element type code " + std::to_string(code) +
             " is not supported; only 1 (f32) and 7 (i64) are");
  }
}

/// A dimension is either a known non-negative extent or unknown ("?").
using DimSize = std::optional<std::int64_t>;

/// Optionally-ranked tensor shape. Unranked means the rank itself is unknown;
/// a ranked shape may still contain unknown dimensions. A shape is "static"
/// when it is ranked and every dimension is known.
class Shape {
public:
  /// Unranked.
  Shape() = default;

  explicit Shape(std::vector<DimSize> dims) : ranked_(true), dims_(std::move(dims)) {
    for (const DimSize &d : dims_)
      if (d && *d < 0)
        fail("InvalidShape", "negative dimension " + std::to_string(*d));
  }

  Shape(std::initializer_list<std::int64_t> dims) {
    ranked_ = true;
    for (std::int64_t d : dims)
      dims_.push_back(DimSize(d));
    if (std::any_of(dims.begin(), dims.end(), [](std::int64_t d) { return d < 0; }))
      fail("InvalidShape", "negative dimension");
  }

  static Shape unranked() { return Shape(); }
  static Shape scalar() { return Shape(std::vector<DimSize>{}); }

  bool ranked() const { return ranked_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  const std::vector<DimSize> &dims() const { return dims_; }
  DimSize dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }

  bool is_static() const {
    if (!ranked_)
      return false;
    return std::all_of(dims_.begin(), dims_.end(), [](const DimSize &d) { return d.has_value(); });
  }

  /// Number of elements of a static shape; the empty product is 1, so rank-0
  /// shapes are scalars.
  std::int64_t elem_count() const {
    if (!is_static())
      fail("InvalidShape", "elem_count on non-static shape " + str());
    std::int64_t n = 1;
    for (const DimSize &d : dims_)
      n *= *d;
    return n;
  }

  /// Dims of a static shape as plain integers.
  std::vector<std::int64_t> static_dims() const {
    if (!is_static())
      fail("InvalidShape", "static_dims on non-static shape " + str());
    std::vector<std::int64_t> out;
    out.reserve(dims_.size());
    for (const DimSize &d : dims_)
      out.push_back(*d);
    return out;
  }

  /// "3x4x5", "?x4", "*" (unranked), "" (rank 0).
  std::string str() const {
    if (!ranked_)
      return "*";
    std::ostringstream os;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i)
        os << "x";
      if (dims_[i])
        os << *dims_[i];
      else
        os << "?";
    }
    return os.str();
  }

  bool operator==(const Shape &) const = default;

private:
  bool ranked_ = false;
  std::vector<DimSize> dims_;
};

/// Static type of a graph value: element type plus optionally-ranked shape.
struct TensorType {
  DType dtype = DType::F32;
  Shape shape;

  bool is_static() const { return shape.is_static(); }

  /// MLIR-style spelling: tensor<3x4x5xf32>, tensor<*xf32>, tensor<f32>.
  std::string str(const char *container = "tensor") const {
    std::string inner = shape.str();
    if (!inner.empty())
      inner += "x";
    return std::string(container) + "<" + inner + dtype_name(dtype) + ">";
  }

  bool operator==(const TensorType &) const = default;
};

/// Row-major strides of a static shape (stride of the last dim is 1).
inline std::vector<std::int64_t> row_major_strides(const Shape &shape) {
  std::vector<std::int64_t> dims = shape.static_dims();
  std::vector<std::int64_t> strides(dims.size(), 1);
  for (int i = static_cast<int>(dims.size()) - 2; i >= 0; --i)
    strides[i] = strides[i + 1] * dims[i + 1];
  return strides;
}

/// Row-major offset of `indices` into a static shape.
inline std::int64_t linear_index(const Shape &shape, std::span<const std::int64_t> indices) {
  if (static_cast<int>(indices.size()) != shape.rank() || !shape.is_static())
    fail("OutOfRange", "index arity " + std::to_string(indices.size()) + " does not match shape " +
                           shape.str());
  std::int64_t offset = 0;
  std::int64_t stride = 1;
  for (int i = shape.rank() - 1; i >= 0; --i) {
    std::int64_t extent = *shape.dim(i);
    std::int64_t idx = indices[static_cast<std::size_t>(i)];
    if (idx < 0 || idx >= extent)
      fail("OutOfRange", "index " + std::to_string(idx) + " out of range for dim " +
                             std::to_string(i) + " of " + shape.str());
    offset += idx * stride;
    stride *= extent;
  }
  return offset;
}

/// ONNX multidirectional broadcast of two static shapes: ranks align to the
/// right, each result dim is the max of the pair, and a pair must be equal or
/// contain a 1.
inline Shape broadcast_shapes(const Shape &a, const Shape &b) {
  if (!a.is_static() || !b.is_static())
    fail("IncompatibleShapes", "broadcast of non-static shapes");
  int rank = std::max(a.rank(), b.rank());
  std::vector<DimSize> out(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    int ia = a.rank() - rank + i;
    int ib = b.rank() - rank + i;
    std::int64_t da = ia < 0 ? 1 : *a.dim(ia);
    std::int64_t db = ib < 0 ? 1 : *b.dim(ib);
    if (da != db && da != 1 && db != 1)
      fail("IncompatibleShapes",
           "cannot broadcast " + a.str() + " with " + b.str() + " (dim " + std::to_string(i) + ")");
    out[static_cast<std::size_t>(i)] = std::max(da, db);
  }
  return Shape(std::move(out));
}

/// True when `from` broadcasts into `to` without changing `to` (the ONNX
/// unidirectional rule, used by Gemm's C operand).
inline bool unidirectionally_broadcastable(const Shape &from, const Shape &to) {
  if (!from.is_static() || !to.is_static())
    return false;
  if (from.rank() > to.rank())
    return false;
  for (int i = 0; i < from.rank(); ++i) {
    std::int64_t df = *from.dim(i);
    std::int64_t dt = *to.dim(to.rank() - from.rank() + i);
    if (df != dt && df != 1)
      return false;
  }
  return true;
}

/// Concrete tensor: dtype, static shape, and a flat row-major payload.
class TensorValue {
public:
  TensorValue() : dtype_(DType::F32), shape_(Shape::scalar()), data_(std::vector<float>{0.0f}) {}

  static TensorValue f32(Shape shape, std::vector<float> data) {
    check_size(shape, data.size());
    TensorValue v;
    v.dtype_ = DType::F32;
    v.shape_ = std::move(shape);
    v.data_ = std::move(data);
    return v;
  }

  static TensorValue i64(Shape shape, std::vector<std::int64_t> data) {
    check_size(shape, data.size());
    TensorValue v;
    v.dtype_ = DType::I64;
    v.shape_ = std::move(shape);
    v.data_ = std::move(data);
    return v;
  }

  static TensorValue scalar_f32(float x) { return f32(Shape::scalar(), {x}); }
  static TensorValue scalar_i64(std::int64_t x) { return i64(Shape::scalar(), {x}); }

  static TensorValue zeros(DType dtype, const Shape &shape) {
    std::size_t n = static_cast<std::size_t>(shape.elem_count());
    if (dtype == DType::F32)
      return f32(shape, std::vector<float>(n, 0.0f));
    return i64(shape, std::vector<std::int64_t>(n, 0));
  }

  DType dtype() const { return dtype_; }
  const Shape &shape() const { return shape_; }
  TensorType type() const { return TensorType{dtype_, shape_}; }
  std::int64_t size() const { return shape_.elem_count(); }

  const std::vector<float> &f32_data() const { return std::get<std::vector<float>>(data_); }
  std::vector<float> &f32_data() { return std::get<std::vector<float>>(data_); }
  const std::vector<std::int64_t> &i64_data() const {
    return std::get<std::vector<std::int64_t>>(data_);
  }
  std::vector<std::int64_t> &i64_data() { return std::get<std::vector<std::int64_t>>(data_); }

  /// Payload equality down to the bit pattern (distinguishes -0.0, compares
  /// NaNs by representation).
  bool bit_equal(const TensorValue &other) const {
    if (dtype_ != other.dtype_ || shape_ != other.shape_)
      return false;
    if (dtype_ == DType::F32) {
      const auto &a = f32_data();
      const auto &b = other.f32_data();
      for (std::size_t i = 0; i < a.size(); ++i)
        if (std::memcmp(&a[i], &b[i], sizeof(float)) != 0)
          return false;
      return true;
    }
    return i64_data() == other.i64_data();
  }

private:
  static void check_size(const Shape &shape, std::size_t n) {
    if (static_cast<std::int64_t>(n) != shape.elem_count())
      fail("InvalidShape", "payload of " + std::to_string(n) + " elements does not match shape " +
                               shape.str());
  }

  DType dtype_;
  Shape shape_;
  std::variant<std::vector<float>, std::vector<std::int64_t>> data_;
};

/// Offset into a broadcast operand: `out_index` indexes the broadcast result
/// shape; the operand shape aligns to the right and size-1 dims pin to 0.
inline std::int64_t broadcast_source_offset(const Shape &src, const Shape &out,
                                            std::span<const std::int64_t> out_index) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(src.rank()));
  int offset = out.rank() - src.rank();
  for (int i = 0; i < src.rank(); ++i) {
    std::int64_t extent = *src.dim(i);
    idx[static_cast<std::size_t>(i)] = extent == 1 ? 0 : out_index[static_cast<std::size_t>(i + offset)];
  }
  return linear_index(src, idx);
}

/// Steps a row-major index tuple; returns false after the last tuple.
inline bool next_index(const Shape &shape, std::vector<std::int64_t> &index) {
  for (int i = shape.rank() - 1; i >= 0; --i) {
    if (++index[static_cast<std::size_t>(i)] < *shape.dim(i))
      return true;
    index[static_cast<std::size_t>(i)] = 0;
  }
  return false;
}

} // namespace loom
