/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- graph_eval.hpp --------------------------===//
//
// Direct per-op evaluation of graph operations on concrete tensors. This is
// the semantic reference for the whole pipeline: lowering equivalence tests
// compare against it, and constant folding reuses the same kernels so that
// folding an op computes exactly what running it would.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"
#include "loom/tensor.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace loom {

namespace detail {

inline void require_same_dtype(OpKind kind, const TensorValue &a, const TensorValue &b) {
  if (a.dtype() != b.dtype())
    fail("TypeMismatch", std::string(op_name(kind)) + " operands must share one element type");
}

template <typename T, typename F>
TensorValue broadcast_binary(const TensorValue &a, const TensorValue &b, F fn) {
  Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  TensorValue out = TensorValue::zeros(a.dtype(), out_shape);
  auto &out_data = [&]() -> std::vector<T> & {
    if constexpr (std::is_same_v<T, float>)
      return out.f32_data();
    else
      return out.i64_data();
  }();
  const auto &ad = [&]() -> const std::vector<T> & {
    if constexpr (std::is_same_v<T, float>)
      return a.f32_data();
    else
      return a.i64_data();
  }();
  const auto &bd = [&]() -> const std::vector<T> & {
    if constexpr (std::is_same_v<T, float>)
      return b.f32_data();
    else
      return b.i64_data();
  }();

  std::vector<std::int64_t> idx(static_cast<std::size_t>(out_shape.rank()), 0);
  std::int64_t n = out_shape.elem_count();
  for (std::int64_t flat = 0; flat < n; ++flat) {
    std::int64_t ia = broadcast_source_offset(a.shape(), out_shape, idx);
    std::int64_t ib = broadcast_source_offset(b.shape(), out_shape, idx);
    out_data[static_cast<std::size_t>(flat)] =
        fn(ad[static_cast<std::size_t>(ia)], bd[static_cast<std::size_t>(ib)]);
    next_index(out_shape, idx);
  }
  return out;
}

template <typename F>
TensorValue binary_op(OpKind kind, const TensorValue &a, const TensorValue &b, F fn) {
  require_same_dtype(kind, a, b);
  if (a.dtype() == DType::F32)
    return broadcast_binary<float>(a, b, fn);
  return broadcast_binary<std::int64_t>(a, b, fn);
}

inline TensorValue unary_f32(const TensorValue &a, const std::function<float(float)> &fn) {
  if (a.dtype() != DType::F32)
    fail("TypeMismatch", "op requires f32 input");
  TensorValue out = a;
  for (float &x : out.f32_data())
    x = fn(x);
  return out;
}

inline std::vector<std::int64_t> normalize_axes(const std::vector<std::int64_t> &axes, int rank) {
  std::vector<std::int64_t> out;
  if (axes.empty()) { // empty = reduce everything
    for (int i = 0; i < rank; ++i)
      out.push_back(i);
    return out;
  }
  for (std::int64_t a : axes) {
    std::int64_t norm = a < 0 ? a + rank : a;
    if (norm < 0 || norm >= rank)
      fail("ShapeMismatch", "reduction axis " + std::to_string(a) + " out of range for rank " +
                                std::to_string(rank));
    out.push_back(norm);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline Shape reduced_shape(const Shape &in, const std::vector<std::int64_t> &axes, bool keepdims) {
  std::vector<DimSize> dims;
  for (int i = 0; i < in.rank(); ++i) {
    bool reduced = std::find(axes.begin(), axes.end(), i) != axes.end();
    if (reduced) {
      if (keepdims)
        dims.push_back(DimSize(1));
    } else {
      dims.push_back(in.dim(i));
    }
  }
  return Shape(std::move(dims));
}

/// Sum-style reduction; `absolute` folds in an elementwise |x| (ReduceL1).
/// For each output element the reduced subspace is visited in row-major
/// order, the same order the lowered loop nests use.
template <typename T>
TensorValue reduce_sum(const TensorValue &in, const std::vector<std::int64_t> &axes, bool keepdims,
                       bool absolute) {
  Shape out_shape = reduced_shape(in.shape(), axes, keepdims);
  TensorValue out = TensorValue::zeros(in.dtype(), out_shape);
  const auto &src = [&]() -> const std::vector<T> & {
    if constexpr (std::is_same_v<T, float>)
      return in.f32_data();
    else
      return in.i64_data();
  }();
  auto &dst = [&]() -> std::vector<T> & {
    if constexpr (std::is_same_v<T, float>)
      return out.f32_data();
    else
      return out.i64_data();
  }();

  std::vector<bool> is_reduced(static_cast<std::size_t>(in.shape().rank()), false);
  for (std::int64_t a : axes)
    is_reduced[static_cast<std::size_t>(a)] = true;

  std::vector<std::int64_t> idx(static_cast<std::size_t>(in.shape().rank()), 0);
  std::int64_t n = in.shape().elem_count();
  std::vector<std::int64_t> out_idx;
  for (std::int64_t flat = 0; flat < n; ++flat) {
    out_idx.clear();
    for (int i = 0; i < in.shape().rank(); ++i) {
      if (is_reduced[static_cast<std::size_t>(i)]) {
        if (keepdims)
          out_idx.push_back(0);
      } else {
        out_idx.push_back(idx[static_cast<std::size_t>(i)]);
      }
    }
    T v = src[static_cast<std::size_t>(flat)];
    if (absolute)
      v = v < T(0) ? static_cast<T>(-v) : v;
    dst[static_cast<std::size_t>(linear_index(out_shape, out_idx))] += v;
    next_index(in.shape(), idx);
  }
  return out;
}

inline void require_rank(OpKind kind, const TensorValue &v, int rank) {
  if (v.shape().rank() != rank)
    fail("ShapeMismatch", std::string(op_name(kind)) + " expects a rank-" + std::to_string(rank) +
                              " operand, got " + v.shape().str());
}

inline TensorValue eval_matmul(const TensorValue &a, const TensorValue &b) {
  require_rank(OpKind::MatMul, a, 2);
  require_rank(OpKind::MatMul, b, 2);
  std::int64_t m = *a.shape().dim(0), k = *a.shape().dim(1);
  std::int64_t k2 = *b.shape().dim(0), n = *b.shape().dim(1);
  if (k != k2)
    fail("ShapeMismatch",
         "MatMul inner dims differ: " + a.shape().str() + " vs " + b.shape().str());
  TensorValue out = TensorValue::zeros(DType::F32, Shape{m, n});
  const auto &ad = a.f32_data();
  const auto &bd = b.f32_data();
  auto &od = out.f32_data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::int64_t p = 0; p < k; ++p)
        acc += ad[static_cast<std::size_t>(i * k + p)] * bd[static_cast<std::size_t>(p * n + j)];
      od[static_cast<std::size_t>(i * n + j)] = acc;
    }
  return out;
}

inline TensorValue eval_gemm(const TensorValue &a, const TensorValue &b, const TensorValue &c,
                             float alpha, float beta) {
  TensorValue prod = eval_matmul(a, b);
  const Shape &out_shape = prod.shape();
  if (!unidirectionally_broadcastable(c.shape(), out_shape))
    fail("ShapeMismatch", "Gemm C operand " + c.shape().str() +
                              " does not broadcast to " + out_shape.str());
  auto &od = prod.f32_data();
  const auto &cd = c.f32_data();
  std::vector<std::int64_t> idx(2, 0);
  std::int64_t n = out_shape.elem_count();
  for (std::int64_t flat = 0; flat < n; ++flat) {
    float cv = cd[static_cast<std::size_t>(broadcast_source_offset(c.shape(), out_shape, idx))];
    od[static_cast<std::size_t>(flat)] = alpha * od[static_cast<std::size_t>(flat)] + beta * cv;
    next_index(out_shape, idx);
  }
  return prod;
}

/// floor((extent + pad_begin + pad_end - window) / stride) + 1
inline std::int64_t conv_out_dim(std::int64_t extent, std::int64_t pad_begin, std::int64_t pad_end,
                                 std::int64_t window, std::int64_t stride) {
  std::int64_t span = extent + pad_begin + pad_end - window;
  if (span < 0 || stride < 1)
    fail("ShapeMismatch", "window of " + std::to_string(window) +
                              " does not fit input extent " + std::to_string(extent) +
                              " with pads " + std::to_string(pad_begin) + "/" +
                              std::to_string(pad_end));
  return span / stride + 1;
}

inline void check_conv_attrs(OpKind kind, const std::vector<std::int64_t> &strides,
                             const std::vector<std::int64_t> &pads) {
  if (strides.size() != 2)
    fail("ShapeMismatch", std::string(op_name(kind)) + " strides must have 2 entries");
  if (pads.size() != 4)
    fail("ShapeMismatch",
         std::string(op_name(kind)) + " pads must have 4 entries [top,left,bottom,right]");
  for (std::int64_t p : pads)
    if (p < 0)
      fail("ShapeMismatch", "negative padding");
}

inline TensorValue eval_conv(const TensorValue &x, const TensorValue &w,
                             const std::vector<std::int64_t> &strides,
                             const std::vector<std::int64_t> &pads) {
  require_rank(OpKind::Conv, x, 4);
  require_rank(OpKind::Conv, w, 4);
  check_conv_attrs(OpKind::Conv, strides, pads);
  auto xd = x.shape().static_dims(); // N, C, H, W
  auto wd = w.shape().static_dims(); // M, C, kH, kW
  if (xd[1] != wd[1])
    fail("ShapeMismatch", "Conv input channels " + std::to_string(xd[1]) +
                              " do not match kernel channels " + std::to_string(wd[1]));
  std::int64_t oh = conv_out_dim(xd[2], pads[0], pads[2], wd[2], strides[0]);
  std::int64_t ow = conv_out_dim(xd[3], pads[1], pads[3], wd[3], strides[1]);
  TensorValue out = TensorValue::zeros(DType::F32, Shape{xd[0], wd[0], oh, ow});
  const auto &xv = x.f32_data();
  const auto &wv = w.f32_data();
  auto &ov = out.f32_data();
  auto xat = [&](std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t ww) {
    return xv[static_cast<std::size_t>(((n * xd[1] + c) * xd[2] + h) * xd[3] + ww)];
  };
  auto wat = [&](std::int64_t m, std::int64_t c, std::int64_t kh, std::int64_t kw) {
    return wv[static_cast<std::size_t>(((m * wd[1] + c) * wd[2] + kh) * wd[3] + kw)];
  };
  std::size_t o = 0;
  for (std::int64_t n = 0; n < xd[0]; ++n)
    for (std::int64_t m = 0; m < wd[0]; ++m)
      for (std::int64_t i = 0; i < oh; ++i)
        for (std::int64_t j = 0; j < ow; ++j, ++o) {
          float acc = 0.0f;
          for (std::int64_t c = 0; c < wd[1]; ++c)
            for (std::int64_t kh = 0; kh < wd[2]; ++kh)
              for (std::int64_t kw = 0; kw < wd[3]; ++kw) {
                std::int64_t h = i * strides[0] - pads[0] + kh;
                std::int64_t ww = j * strides[1] - pads[1] + kw;
                if (h < 0 || h >= xd[2] || ww < 0 || ww >= xd[3])
                  continue; // zero padding contributes nothing
                acc += xat(n, c, h, ww) * wat(m, c, kh, kw);
              }
          ov[o] = acc;
        }
  return out;
}

inline TensorValue eval_maxpool(const TensorValue &x, const std::vector<std::int64_t> &kernel,
                                const std::vector<std::int64_t> &strides,
                                const std::vector<std::int64_t> &pads) {
  require_rank(OpKind::MaxPool, x, 4);
  check_conv_attrs(OpKind::MaxPool, strides, pads);
  if (kernel.size() != 2)
    fail("ShapeMismatch", "MaxPool kernel_shape must have 2 entries");
  auto xd = x.shape().static_dims(); // N, C, H, W
  std::int64_t oh = conv_out_dim(xd[2], pads[0], pads[2], kernel[0], strides[0]);
  std::int64_t ow = conv_out_dim(xd[3], pads[1], pads[3], kernel[1], strides[1]);
  TensorValue out = TensorValue::zeros(DType::F32, Shape{xd[0], xd[1], oh, ow});
  const auto &xv = x.f32_data();
  auto &ov = out.f32_data();
  const float neg_inf = -std::numeric_limits<float>::infinity();
  std::size_t o = 0;
  for (std::int64_t n = 0; n < xd[0]; ++n)
    for (std::int64_t c = 0; c < xd[1]; ++c)
      for (std::int64_t i = 0; i < oh; ++i)
        for (std::int64_t j = 0; j < ow; ++j, ++o) {
          float best = neg_inf; // padding contributes -inf
          for (std::int64_t kh = 0; kh < kernel[0]; ++kh)
            for (std::int64_t kw = 0; kw < kernel[1]; ++kw) {
              std::int64_t h = i * strides[0] - pads[0] + kh;
              std::int64_t ww = j * strides[1] - pads[1] + kw;
              if (h < 0 || h >= xd[2] || ww < 0 || ww >= xd[3])
                continue;
              float v = xv[static_cast<std::size_t>(((n * xd[1] + c) * xd[2] + h) * xd[3] + ww)];
              best = std::max(best, v);
            }
          ov[o] = best;
        }
  return out;
}

/// Resolves a Reshape target (with at most one -1) against an element count.
inline Shape resolve_reshape(const Shape &data_shape, const std::vector<std::int64_t> &target) {
  std::int64_t total = data_shape.elem_count();
  std::int64_t known = 1;
  int infer_at = -1;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == -1) {
      if (infer_at >= 0)
        fail("ShapeMismatch", "Reshape target has more than one -1");
      infer_at = static_cast<int>(i);
    } else if (target[i] < 0) {
      fail("ShapeMismatch", "Reshape target has negative dim " + std::to_string(target[i]));
    } else {
      known *= target[i];
    }
  }
  std::vector<std::int64_t> dims(target.begin(), target.end());
  if (infer_at >= 0) {
    if (known == 0 || total % known != 0)
      fail("ShapeMismatch", "cannot infer -1: " + std::to_string(total) +
                                " elements not divisible by " + std::to_string(known));
    dims[static_cast<std::size_t>(infer_at)] = total / known;
    known *= dims[static_cast<std::size_t>(infer_at)];
  }
  if (known != total)
    fail("ShapeMismatch", "Reshape target has " + std::to_string(known) + " elements, data has " +
                              std::to_string(total));
  std::vector<DimSize> out(dims.begin(), dims.end());
  return Shape(std::move(out));
}

inline TensorValue eval_reshape(const TensorValue &data, const TensorValue &target) {
  if (target.dtype() != DType::I64 || target.shape().rank() != 1)
    fail("TypeMismatch", "Reshape target must be a rank-1 i64 tensor");
  Shape out_shape = resolve_reshape(data.shape(), target.i64_data());
  if (data.dtype() == DType::F32)
    return TensorValue::f32(out_shape, data.f32_data());
  return TensorValue::i64(out_shape, data.i64_data());
}

} // namespace detail

/// Evaluates one op on concrete operands. Both the reference evaluator and
/// the constant-folding pass call this, so their arithmetic is identical
/// (F32 round-to-nearest-even).
inline TensorValue eval_op(OpKind kind, const AttrMap &attrs, std::span<const TensorValue> args) {
  using namespace detail;
  switch (kind) {
  case OpKind::Add:
    return binary_op(kind, args[0], args[1], [](auto a, auto b) { return a + b; });
  case OpKind::Mul:
    return binary_op(kind, args[0], args[1], [](auto a, auto b) { return a * b; });
  case OpKind::Sub:
    return binary_op(kind, args[0], args[1], [](auto a, auto b) { return a - b; });
  case OpKind::Abs: {
    if (args[0].dtype() == DType::F32)
      return unary_f32(args[0], [](float x) { return std::fabs(x); });
    TensorValue out = args[0];
    for (std::int64_t &x : out.i64_data())
      x = x < 0 ? -x : x;
    return out;
  }
  case OpKind::Exp:
    return unary_f32(args[0], [](float x) { return std::exp(x); });
  case OpKind::Relu:
    return unary_f32(args[0], [](float x) { return std::max(x, 0.0f); });
  case OpKind::LeakyRelu: {
    float alpha = std::get<float>(attrs.at("alpha"));
    return unary_f32(args[0], [alpha](float x) { return x >= 0.0f ? x : alpha * x; });
  }
  case OpKind::MatMul:
    return eval_matmul(args[0], args[1]);
  case OpKind::Gemm:
    return eval_gemm(args[0], args[1], args[2], std::get<float>(attrs.at("alpha")),
                     std::get<float>(attrs.at("beta")));
  case OpKind::Conv:
    return eval_conv(args[0], args[1], std::get<std::vector<std::int64_t>>(attrs.at("strides")),
                     std::get<std::vector<std::int64_t>>(attrs.at("pads")));
  case OpKind::MaxPool:
    return eval_maxpool(args[0], std::get<std::vector<std::int64_t>>(attrs.at("kernel_shape")),
                        std::get<std::vector<std::int64_t>>(attrs.at("strides")),
                        std::get<std::vector<std::int64_t>>(attrs.at("pads")));
  case OpKind::ReduceSum:
  case OpKind::ReduceL1: {
    bool absolute = kind == OpKind::ReduceL1;
    auto axes = normalize_axes(std::get<std::vector<std::int64_t>>(attrs.at("axes")),
                               args[0].shape().rank());
    bool keepdims = std::get<std::int64_t>(attrs.at("keepdims")) != 0;
    if (args[0].dtype() == DType::F32)
      return reduce_sum<float>(args[0], axes, keepdims, absolute);
    return reduce_sum<std::int64_t>(args[0], axes, keepdims, absolute);
  }
  case OpKind::Reshape:
    return eval_reshape(args[0], args[1]);
  case OpKind::Identity:
    return args[0];
  case OpKind::Constant:
    return std::get<TensorValue>(attrs.at("value"));
  }
  fail("UnsupportedOp", "op kind outside the registry");
}

/// Executes the module's entry function in topological order using direct
/// per-op math. Serves as the independent oracle for every lowering path.
inline std::vector<TensorValue> reference_eval(const GraphModule &module,
                                               std::span<const TensorValue> inputs) {
  const GraphFunction &fn = module.main();
  if (static_cast<int>(inputs.size()) != static_cast<int>(fn.inputs.size()))
    fail("ArityMismatch", "expected " + std::to_string(fn.inputs.size()) + " inputs, got " +
                              std::to_string(inputs.size()));

  std::map<ValueId, TensorValue> env;
  for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
    const TensorType &declared = fn.type_of(fn.inputs[i]);
    if (inputs[i].dtype() != declared.dtype)
      fail("TypeMismatch", "input " + std::to_string(i) + " has dtype " +
                               dtype_name(inputs[i].dtype()) + ", expected " +
                               dtype_name(declared.dtype));
    if (declared.shape.is_static() && inputs[i].shape() != declared.shape)
      fail("TypeMismatch", "input " + std::to_string(i) + " has shape " +
                               inputs[i].shape().str() + ", expected " + declared.shape.str());
    env.emplace(fn.inputs[i], inputs[i]);
  }

  for (const GraphOp &op : fn.ops) {
    std::vector<TensorValue> args;
    args.reserve(op.operands.size());
    for (ValueId o : op.operands)
      args.push_back(env.at(o));
    env.insert_or_assign(op.results[0], eval_op(op.kind, op.attributes, args));
  }

  std::vector<TensorValue> out;
  out.reserve(fn.results.size());
  for (ValueId r : fn.results)
    out.push_back(env.at(r));
  return out;
}

} // namespace loom
