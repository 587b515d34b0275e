/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- shape_infer.hpp -------------------------===//
//
// Shape inference: fixpoint propagation of ranks and dims through the op
// list. Values keep unknown dims where nothing forces them; conflicting
// known dims are a ShapeMismatch error naming the op.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"
#include "loom/graph_eval.hpp"

#include <optional>
#include <string>

namespace loom {

namespace detail {

[[noreturn]] inline void shape_error(const GraphOp &op, int index, const std::string &msg) {
  fail("ShapeMismatch",
       "op #" + std::to_string(index) + " (" + std::string(op_name(op.kind)) + "): " + msg);
}

/// Broadcast over partially known shapes. Unranked operands give an unranked
/// result; a known non-1 dim wins over an unknown one.
inline Shape broadcast_partial(const GraphOp &op, int index, const Shape &a, const Shape &b) {
  if (!a.ranked() || !b.ranked())
    return Shape::unranked();
  int rank = std::max(a.rank(), b.rank());
  std::vector<DimSize> out(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    int ia = a.rank() - rank + i;
    int ib = b.rank() - rank + i;
    DimSize da = ia < 0 ? DimSize(1) : a.dim(ia);
    DimSize db = ib < 0 ? DimSize(1) : b.dim(ib);
    if (da && db) {
      if (*da != *db && *da != 1 && *db != 1)
        shape_error(op, index, "cannot broadcast " + a.str() + " with " + b.str());
      out[static_cast<std::size_t>(i)] = std::max(*da, *db);
    } else if (da && *da != 1) {
      out[static_cast<std::size_t>(i)] = da;
    } else if (db && *db != 1) {
      out[static_cast<std::size_t>(i)] = db;
    } else {
      out[static_cast<std::size_t>(i)] = std::nullopt; // stays unknown
    }
  }
  return Shape(std::move(out));
}

inline void require_rank_if_ranked(const GraphOp &op, int index, const Shape &s, int rank,
                                   const char *what) {
  if (s.ranked() && s.rank() != rank)
    shape_error(op, index, std::string(what) + " must have rank " + std::to_string(rank) +
                               ", got " + s.str());
}

inline DimSize conv_out_dim_partial(const GraphOp &op, int index, DimSize extent,
                                    std::int64_t pad_begin, std::int64_t pad_end, DimSize window,
                                    std::int64_t stride) {
  if (!extent || !window)
    return std::nullopt;
  std::int64_t span = *extent + pad_begin + pad_end - *window;
  if (span < 0)
    shape_error(op, index, "window does not fit the padded input");
  if (stride < 1)
    shape_error(op, index, "stride must be positive");
  return DimSize(span / stride + 1);
}

/// Result type of one op from its operand types. Shapes may be partial;
/// the rule returns the most precise shape derivable from what is known.
inline TensorType infer_op_type(const GraphFunction &fn, const GraphOp &op, int index) {
  auto type = [&](std::size_t i) -> const TensorType & { return fn.type_of(op.operands.at(i)); };
  const OpSpec &spec = op_spec(op.kind);
  if (spec.f32_only) {
    for (ValueId o : op.operands)
      if (fn.type_of(o).dtype != DType::F32)
        fail("UnsupportedDtype", "op #" + std::to_string(index) + " (" +
                                     std::string(spec.name) + ") requires f32 operands");
  }

  switch (op.kind) {
  case OpKind::Add:
  case OpKind::Mul:
  case OpKind::Sub: {
    if (type(0).dtype != type(1).dtype)
      shape_error(op, index, "operand dtypes differ");
    return TensorType{type(0).dtype, broadcast_partial(op, index, type(0).shape, type(1).shape)};
  }
  case OpKind::Abs:
  case OpKind::Exp:
  case OpKind::Relu:
  case OpKind::LeakyRelu:
  case OpKind::Identity:
    return type(0);
  case OpKind::MatMul: {
    require_rank_if_ranked(op, index, type(0).shape, 2, "MatMul operand 0");
    require_rank_if_ranked(op, index, type(1).shape, 2, "MatMul operand 1");
    DimSize m, k1, k2, n;
    if (type(0).shape.ranked()) {
      m = type(0).shape.dim(0);
      k1 = type(0).shape.dim(1);
    }
    if (type(1).shape.ranked()) {
      k2 = type(1).shape.dim(0);
      n = type(1).shape.dim(1);
    }
    if (k1 && k2 && *k1 != *k2)
      shape_error(op, index, "inner dims differ: " + type(0).shape.str() + " vs " +
                                 type(1).shape.str());
    return TensorType{DType::F32, Shape(std::vector<DimSize>{m, n})};
  }
  case OpKind::Gemm: {
    GraphOp as_matmul = op;
    as_matmul.kind = OpKind::MatMul;
    as_matmul.operands = {op.operands[0], op.operands[1]};
    TensorType out = infer_op_type(fn, as_matmul, index);
    const Shape &c = type(2).shape;
    if (out.shape.is_static() && c.is_static() &&
        !unidirectionally_broadcastable(c, out.shape))
      shape_error(op, index,
                  "C operand " + c.str() + " does not broadcast to " + out.shape.str());
    if (c.ranked() && c.rank() > 2)
      shape_error(op, index, "Gemm C must have rank <= 2");
    return out;
  }
  case OpKind::Conv: {
    const auto &strides = op.ints_attr("strides");
    const auto &pads = op.ints_attr("pads");
    check_conv_attrs(OpKind::Conv, strides, pads);
    require_rank_if_ranked(op, index, type(0).shape, 4, "Conv input");
    require_rank_if_ranked(op, index, type(1).shape, 4, "Conv kernel");
    const Shape &x = type(0).shape;
    const Shape &w = type(1).shape;
    if (!x.ranked() || !w.ranked())
      return TensorType{DType::F32,
                        Shape(std::vector<DimSize>{std::nullopt, std::nullopt, std::nullopt,
                                                   std::nullopt})};
    if (x.dim(1) && w.dim(1) && *x.dim(1) != *w.dim(1))
      shape_error(op, index, "input channels " + x.str() + " do not match kernel " + w.str());
    DimSize oh = conv_out_dim_partial(op, index, x.dim(2), pads[0], pads[2], w.dim(2), strides[0]);
    DimSize ow = conv_out_dim_partial(op, index, x.dim(3), pads[1], pads[3], w.dim(3), strides[1]);
    return TensorType{DType::F32, Shape(std::vector<DimSize>{x.dim(0), w.dim(0), oh, ow})};
  }
  case OpKind::MaxPool: {
    const auto &kernel = op.ints_attr("kernel_shape");
    const auto &strides = op.ints_attr("strides");
    const auto &pads = op.ints_attr("pads");
    check_conv_attrs(OpKind::MaxPool, strides, pads);
    if (kernel.size() != 2)
      shape_error(op, index, "kernel_shape must have 2 entries");
    require_rank_if_ranked(op, index, type(0).shape, 4, "MaxPool input");
    const Shape &x = type(0).shape;
    if (!x.ranked())
      return TensorType{DType::F32,
                        Shape(std::vector<DimSize>{std::nullopt, std::nullopt, std::nullopt,
                                                   std::nullopt})};
    DimSize oh =
        conv_out_dim_partial(op, index, x.dim(2), pads[0], pads[2], DimSize(kernel[0]), strides[0]);
    DimSize ow =
        conv_out_dim_partial(op, index, x.dim(3), pads[1], pads[3], DimSize(kernel[1]), strides[1]);
    return TensorType{DType::F32, Shape(std::vector<DimSize>{x.dim(0), x.dim(1), oh, ow})};
  }
  case OpKind::ReduceSum:
  case OpKind::ReduceL1: {
    const Shape &in = type(0).shape;
    if (!in.ranked())
      return TensorType{type(0).dtype, Shape::unranked()};
    auto axes = normalize_axes(op.ints_attr("axes"), in.rank());
    bool keepdims = op.i64_attr("keepdims") != 0;
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
    return TensorType{type(0).dtype, Shape(std::move(dims))};
  }
  case OpKind::Reshape: {
    if (type(1).dtype != DType::I64)
      shape_error(op, index, "target shape operand must be i64");
    const TensorValue *target = fn.constant_payload(op.operands[1]);
    if (!target)
      shape_error(op, index, "target shape must come from a Constant operand");
    if (target->shape().rank() != 1)
      shape_error(op, index, "target shape must be a rank-1 tensor");
    const auto &dims = target->i64_data();
    if (type(0).shape.is_static())
      return TensorType{type(0).dtype, resolve_reshape(type(0).shape, dims)};
    std::vector<DimSize> out;
    for (std::int64_t d : dims) {
      if (d == -1)
        out.push_back(std::nullopt);
      else if (d < 0)
        shape_error(op, index, "negative target dim " + std::to_string(d));
      else
        out.push_back(DimSize(d));
    }
    return TensorType{type(0).dtype, Shape(std::move(out))};
  }
  case OpKind::Constant:
    return op.tensor_attr("value").type();
  }
  fail("UnsupportedOp", "op kind outside the registry");
}

/// Refines `current` with `inferred`; true when anything changed.
inline bool refine_type(const GraphOp &op, int index, TensorType &current,
                        const TensorType &inferred) {
  if (current.dtype != inferred.dtype)
    shape_error(op, index, "inferred dtype " + std::string(dtype_name(inferred.dtype)) +
                               " conflicts with annotated " + std::string(dtype_name(current.dtype)));
  if (!inferred.shape.ranked())
    return false;
  if (!current.shape.ranked()) {
    current.shape = inferred.shape;
    return true;
  }
  if (current.shape.rank() != inferred.shape.rank())
    shape_error(op, index, "inferred shape " + inferred.shape.str() + " conflicts with annotated " +
                               current.shape.str());
  bool changed = false;
  std::vector<DimSize> dims = current.shape.dims();
  for (int i = 0; i < current.shape.rank(); ++i) {
    DimSize cur = dims[static_cast<std::size_t>(i)];
    DimSize inf = inferred.shape.dim(i);
    if (!inf)
      continue;
    if (cur && *cur != *inf)
      shape_error(op, index, "inferred shape " + inferred.shape.str() +
                                 " conflicts with annotated " + current.shape.str());
    if (!cur) {
      dims[static_cast<std::size_t>(i)] = inf;
      changed = true;
    }
  }
  if (changed)
    current.shape = Shape(std::move(dims));
  return changed;
}

} // namespace detail

/// Fixpoint iteration in topological order; terminates within
/// max_rank * |ops| sweeps (monotone refinement converges much earlier).
inline GraphModule pass_shape_inference(GraphModule module) {
  GraphFunction &fn = module.main();
  int max_rank = 1;
  for (const ValueInfo &v : fn.values)
    max_rank = std::max(max_rank, v.type.shape.rank());
  int limit = max_rank * static_cast<int>(fn.ops.size()) + 2;

  for (int sweep = 0; sweep < limit; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i < fn.ops.size(); ++i) {
      const GraphOp &op = fn.ops[i];
      TensorType inferred = detail::infer_op_type(fn, op, static_cast<int>(i));
      changed |= detail::refine_type(op, static_cast<int>(i), fn.type_of(op.results[0]), inferred);
    }
    if (!changed)
      return module;
  }
  fail("ShapeInferenceDivergence", "no fixpoint after " + std::to_string(limit) + " sweeps");
}

} // namespace loom
