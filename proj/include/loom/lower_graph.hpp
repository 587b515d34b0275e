/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- lower_graph.hpp -------------------------===//
//
// Graph-to-loop lowering. Every op result gets one buffer; every registry op
// has exactly one emitter producing iterates over it. Reduction loops come
// after the data-parallel loops of a nest and are never exposed to
// user-facing schedules, so scheduling stays bit-exact.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"
#include "loom/graph_eval.hpp"
#include "loom/loop_ir.hpp"

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace loom {

namespace detail {

class LoopEmitter {
public:
  explicit LoopEmitter(const GraphFunction &graph) : graph_(graph) {}

  LoopModule run(const EntryPointDescriptor &entry) {
    fn_.name = graph_.name;
    for (ValueId v : graph_.inputs) {
      check_static(v);
      std::int32_t b = add_buffer(v, /*is_input=*/true);
      buffers_[v] = b;
    }
    for (const GraphOp &op : graph_.ops) {
      check_static(op.results[0]);
      emit_op(op);
    }
    for (ValueId r : graph_.results)
      fn_.results.push_back(buffers_.at(r));
    return LoopModule{std::move(fn_), entry};
  }

private:
  void check_static(ValueId v) {
    if (!graph_.type_of(v).shape.is_static())
      fail("DynamicShapeUnsupported", "value of type " + graph_.type_of(v).str() +
                                          " must be resolved before lowering to loops");
  }

  std::int32_t add_buffer(ValueId v, bool is_input, std::optional<TensorValue> init = {}) {
    BufferDecl b;
    const std::string &stored = graph_.values[static_cast<std::size_t>(v)].name;
    b.name = stored.empty() ? "v" + std::to_string(v) : stored;
    b.type = graph_.type_of(v);
    b.init = std::move(init);
    b.is_input = is_input;
    fn_.buffers.push_back(std::move(b));
    return static_cast<std::int32_t>(fn_.buffers.size() - 1);
  }

  std::int32_t add_scratch_buffer(std::string name, TensorType type,
                                  std::optional<TensorValue> init = {}) {
    fn_.buffers.push_back(BufferDecl{std::move(name), std::move(type), std::move(init), false});
    return static_cast<std::int32_t>(fn_.buffers.size() - 1);
  }

  /// One loop per dim of `shape`; a rank-0 nest gets a single [0,1) loop.
  std::vector<LoopHandle> loops_for(const Shape &shape) {
    std::vector<std::array<std::int64_t, 2>> bounds;
    for (std::int64_t d : shape.static_dims())
      bounds.push_back({0, d});
    if (bounds.empty())
      bounds.push_back({0, 1});
    return define_loops(fn_, bounds);
  }

  static std::vector<AffineExpr> iv_indices(std::span<const LoopHandle> loops, const Shape &shape) {
    std::vector<AffineExpr> out;
    for (int i = 0; i < shape.rank(); ++i)
      out.push_back(AffineExpr::var(loops[static_cast<std::size_t>(i)].id));
    return out;
  }

  /// Operand indices for a broadcast read: right-aligned, size-1 dims pinned
  /// to zero.
  static std::vector<AffineExpr> broadcast_indices(std::span<const LoopHandle> loops,
                                                   const Shape &out, const Shape &operand) {
    std::vector<AffineExpr> idx;
    int offset = out.rank() - operand.rank();
    for (int i = 0; i < operand.rank(); ++i) {
      if (*operand.dim(i) == 1 && *out.dim(i + offset) != 1)
        idx.push_back(AffineExpr::constant_expr(0));
      else
        idx.push_back(AffineExpr::var(loops[static_cast<std::size_t>(i + offset)].id));
    }
    return idx;
  }

  static std::int32_t push(std::vector<ScalarOp> &body, ScalarOp op) {
    body.push_back(std::move(op));
    return static_cast<std::int32_t>(body.size() - 1);
  }
  static std::int32_t load(std::vector<ScalarOp> &body, std::int32_t buffer, DType dtype,
                           std::vector<AffineExpr> idx) {
    ScalarOp op{ScalarKind::Load, dtype, buffer, std::move(idx), {}, 0, 0};
    return push(body, std::move(op));
  }
  static void store(std::vector<ScalarOp> &body, std::int32_t buffer, DType dtype,
                    std::vector<AffineExpr> idx, std::int32_t value) {
    ScalarOp op{ScalarKind::Store, dtype, buffer, std::move(idx), {ScalarOperand::val(value)}, 0, 0};
    push(body, std::move(op));
  }
  static std::int32_t constf(std::vector<ScalarOp> &body, float v) {
    ScalarOp op{ScalarKind::ConstF, DType::F32, -1, {}, {}, v, 0};
    return push(body, std::move(op));
  }
  static std::int32_t arith(std::vector<ScalarOp> &body, ScalarKind kind, DType dtype,
                            std::vector<std::int32_t> operands) {
    ScalarOp op{kind, dtype, -1, {}, {}, 0, 0};
    for (std::int32_t o : operands)
      op.args.push_back(ScalarOperand::val(o));
    return push(body, std::move(op));
  }

  /// Nest storing a constant at every index of `buffer`.
  void emit_fill(std::int32_t buffer, const Shape &shape, DType dtype, float value,
                 const std::string &tag) {
    std::vector<LoopHandle> loops = loops_for(shape);
    IterateOp &it = add_iterate(fn_, loops, static_cast<int>(loops.size()), tag);
    std::int32_t c;
    if (dtype == DType::F32) {
      c = constf(it.body, value);
    } else {
      ScalarOp op{ScalarKind::ConstI, DType::I64, -1, {}, {}, 0, static_cast<std::int64_t>(value)};
      c = push(it.body, std::move(op));
    }
    store(it.body, buffer, dtype, iv_indices(loops, shape), c);
  }

  void emit_op(const GraphOp &op) {
    ValueId result = op.results[0];
    const TensorType &out_type = graph_.type_of(result);
    const Shape &out = out_type.shape;
    std::string tag(op_name(op.kind));

    if (op.kind == OpKind::Constant) {
      buffers_[result] = add_buffer(result, false, op.tensor_attr("value"));
      return;
    }
    std::int32_t out_buf = add_buffer(result, false);
    buffers_[result] = out_buf;

    auto operand_buf = [&](std::size_t i) { return buffers_.at(op.operands[i]); };
    auto operand_shape = [&](std::size_t i) -> const Shape & {
      return graph_.type_of(op.operands[i]).shape;
    };

    switch (op.kind) {
    case OpKind::Add:
    case OpKind::Mul:
    case OpKind::Sub: {
      ScalarKind k = op.kind == OpKind::Add   ? ScalarKind::Add
                     : op.kind == OpKind::Mul ? ScalarKind::Mul
                                              : ScalarKind::Sub;
      std::vector<LoopHandle> loops = loops_for(out);
      IterateOp &it = add_iterate(fn_, loops, static_cast<int>(loops.size()), tag);
      std::int32_t a = load(it.body, operand_buf(0), out_type.dtype,
                            broadcast_indices(loops, out, operand_shape(0)));
      std::int32_t b = load(it.body, operand_buf(1), out_type.dtype,
                            broadcast_indices(loops, out, operand_shape(1)));
      std::int32_t r = arith(it.body, k, out_type.dtype, {a, b});
      store(it.body, out_buf, out_type.dtype, iv_indices(loops, out), r);
      return;
    }
    case OpKind::Abs:
    case OpKind::Exp: {
      std::vector<LoopHandle> loops = loops_for(out);
      IterateOp &it = add_iterate(fn_, loops, static_cast<int>(loops.size()), tag);
      std::int32_t x = load(it.body, operand_buf(0), out_type.dtype, iv_indices(loops, out));
      ScalarKind k = op.kind == OpKind::Abs ? ScalarKind::Abs : ScalarKind::Exp;
      std::int32_t r = arith(it.body, k, out_type.dtype, {x});
      store(it.body, out_buf, out_type.dtype, iv_indices(loops, out), r);
      return;
    }
    case OpKind::Relu: {
      std::vector<LoopHandle> loops = loops_for(out);
      IterateOp &it = add_iterate(fn_, loops, static_cast<int>(loops.size()), tag);
      std::int32_t x = load(it.body, operand_buf(0), DType::F32, iv_indices(loops, out));
      std::int32_t zero = constf(it.body, 0.0f);
      std::int32_t r = arith(it.body, ScalarKind::Max, DType::F32, {x, zero});
      store(it.body, out_buf, DType::F32, iv_indices(loops, out), r);
      return;
    }
    case OpKind::LeakyRelu: {
      float alpha = op.f32_attr("alpha");
      std::vector<LoopHandle> loops = loops_for(out);
      IterateOp &it = add_iterate(fn_, loops, static_cast<int>(loops.size()), tag);
      std::int32_t x = load(it.body, operand_buf(0), DType::F32, iv_indices(loops, out));
      std::int32_t zero = constf(it.body, 0.0f);
      std::int32_t ge = arith(it.body, ScalarKind::CmpGe, DType::F32, {x, zero});
      std::int32_t a = constf(it.body, alpha);
      std::int32_t scaled = arith(it.body, ScalarKind::Mul, DType::F32, {a, x});
      std::int32_t r = arith(it.body, ScalarKind::Select, DType::F32, {ge, x, scaled});
      store(it.body, out_buf, DType::F32, iv_indices(loops, out), r);
      return;
    }
    case OpKind::Identity:
    case OpKind::Reshape: {
      // row-major bijection: out[flat] = in[flat]
      std::int64_t total = out.elem_count();
      std::vector<LoopHandle> loops =
          define_loops(fn_, {{0, std::max<std::int64_t>(total, 1)}});
      IterateOp &it = add_iterate(fn_, loops, 1, tag);
      std::vector<AffineExpr> flat{AffineExpr::var(loops[0].id)};
      std::int32_t x = load(it.body, operand_buf(0), out_type.dtype, flat);
      store(it.body, out_buf, out_type.dtype, flat, x);
      return;
    }
    case OpKind::MatMul: {
      emit_matmul(out_buf, operand_buf(0), operand_buf(1), operand_shape(0), operand_shape(1), tag);
      return;
    }
    case OpKind::Gemm: {
      emit_matmul(out_buf, operand_buf(0), operand_buf(1), operand_shape(0), operand_shape(1),
                  tag + ".matmul");
      float alpha = op.f32_attr("alpha");
      float beta = op.f32_attr("beta");
      std::vector<LoopHandle> loops = loops_for(out);
      IterateOp &it = add_iterate(fn_, loops, static_cast<int>(loops.size()), tag);
      std::int32_t acc = load(it.body, out_buf, DType::F32, iv_indices(loops, out));
      std::int32_t ca = constf(it.body, alpha);
      std::int32_t scaled = arith(it.body, ScalarKind::Mul, DType::F32, {ca, acc});
      std::int32_t cb = constf(it.body, beta);
      std::int32_t c = load(it.body, operand_buf(2), DType::F32,
                            broadcast_indices(loops, out, operand_shape(2)));
      std::int32_t cterm = arith(it.body, ScalarKind::Mul, DType::F32, {cb, c});
      std::int32_t r = arith(it.body, ScalarKind::Add, DType::F32, {scaled, cterm});
      store(it.body, out_buf, DType::F32, iv_indices(loops, out), r);
      return;
    }
    case OpKind::Conv: {
      emit_conv(op, out_buf, operand_buf(0), operand_buf(1), operand_shape(0), operand_shape(1),
                out);
      return;
    }
    case OpKind::MaxPool: {
      emit_maxpool(op, out_buf, operand_buf(0), operand_shape(0), out);
      return;
    }
    case OpKind::ReduceSum:
    case OpKind::ReduceL1: {
      emit_reduce(op, out_buf, operand_buf(0), operand_shape(0), out, tag);
      return;
    }
    case OpKind::Constant:
      break; // handled above
    }
    fail("UnloweredOp", "no lowering rule for op kind");
  }

  void emit_matmul(std::int32_t out_buf, std::int32_t a_buf, std::int32_t b_buf, const Shape &a,
                   const Shape &b, const std::string &tag) {
    std::int64_t m = *a.dim(0), k = *a.dim(1), n = *b.dim(1);
    Shape out{m, n};
    emit_fill(out_buf, out, DType::F32, 0.0f, tag + ".init");

    std::vector<LoopHandle> loops = define_loops(
        fn_, std::array{std::array<std::int64_t, 2>{0, m}, std::array<std::int64_t, 2>{0, n},
                        std::array<std::int64_t, 2>{0, k}});
    IterateOp &it = add_iterate(fn_, loops, 2, tag); // k is a reduction loop
    AffineExpr im = AffineExpr::var(loops[0].id);
    AffineExpr in = AffineExpr::var(loops[1].id);
    AffineExpr ik = AffineExpr::var(loops[2].id);
    std::int32_t acc = load(it.body, out_buf, DType::F32, {im, in});
    std::int32_t av = load(it.body, a_buf, DType::F32, {im, ik});
    std::int32_t bv = load(it.body, b_buf, DType::F32, {ik, in});
    std::int32_t prod = arith(it.body, ScalarKind::Mul, DType::F32, {av, bv});
    std::int32_t sum = arith(it.body, ScalarKind::Add, DType::F32, {acc, prod});
    store(it.body, out_buf, DType::F32, {im, in}, sum);
  }

  /// Materializes a zero/-inf padded copy of a NCHW input when pads are
  /// nonzero, so window reads stay in bounds without clamped loop bounds.
  std::int32_t pad_input(std::int32_t x_buf, const Shape &x, const std::vector<std::int64_t> &pads,
                         float fill, const std::string &tag) {
    auto d = x.static_dims();
    Shape padded{d[0], d[1], d[2] + pads[0] + pads[2], d[3] + pads[1] + pads[3]};
    std::int32_t pad_buf = add_scratch_buffer(
        fn_.buffers[static_cast<std::size_t>(x_buf)].name + "_padded",
        TensorType{DType::F32, padded});
    emit_fill(pad_buf, padded, DType::F32, fill, tag + ".pad_fill");

    std::vector<LoopHandle> loops = loops_for(x);
    IterateOp &it = add_iterate(fn_, loops, static_cast<int>(loops.size()), tag + ".pad_copy");
    std::int32_t v = load(it.body, x_buf, DType::F32, iv_indices(loops, x));
    std::vector<AffineExpr> dst = iv_indices(loops, x);
    dst[2] = dst[2].plus(pads[0]);
    dst[3] = dst[3].plus(pads[1]);
    store(it.body, pad_buf, DType::F32, std::move(dst), v);
    return pad_buf;
  }

  void emit_conv(const GraphOp &op, std::int32_t out_buf, std::int32_t x_buf, std::int32_t w_buf,
                 const Shape &x, const Shape &w, const Shape &out) {
    const auto &strides = op.ints_attr("strides");
    const auto &pads = op.ints_attr("pads");
    bool padded = pads[0] || pads[1] || pads[2] || pads[3];
    std::int32_t src = padded ? pad_input(x_buf, x, pads, 0.0f, "Conv") : x_buf;

    emit_fill(out_buf, out, DType::F32, 0.0f, "Conv.init");

    auto od = out.static_dims(); // N, M, OH, OW
    auto wd = w.static_dims();   // M, C, kH, kW
    std::vector<LoopHandle> loops = define_loops(
        fn_, std::array{std::array<std::int64_t, 2>{0, od[0]}, std::array<std::int64_t, 2>{0, od[1]},
                        std::array<std::int64_t, 2>{0, od[2]}, std::array<std::int64_t, 2>{0, od[3]},
                        std::array<std::int64_t, 2>{0, wd[1]}, std::array<std::int64_t, 2>{0, wd[2]},
                        std::array<std::int64_t, 2>{0, wd[3]}});
    IterateOp &it = add_iterate(fn_, loops, 4, "Conv"); // c, kh, kw reduce
    AffineExpr in = AffineExpr::var(loops[0].id);
    AffineExpr im = AffineExpr::var(loops[1].id);
    AffineExpr ih = AffineExpr::var(loops[2].id);
    AffineExpr iw = AffineExpr::var(loops[3].id);
    AffineExpr ic = AffineExpr::var(loops[4].id);
    AffineExpr ikh = AffineExpr::var(loops[5].id);
    AffineExpr ikw = AffineExpr::var(loops[6].id);

    std::int32_t acc = load(it.body, out_buf, DType::F32, {in, im, ih, iw});
    AffineExpr src_h = ih.scaled(strides[0]).plus(ikh);
    AffineExpr src_w = iw.scaled(strides[1]).plus(ikw);
    std::int32_t xv = load(it.body, src, DType::F32, {in, ic, src_h, src_w});
    std::int32_t wv = load(it.body, w_buf, DType::F32, {im, ic, ikh, ikw});
    std::int32_t prod = arith(it.body, ScalarKind::Mul, DType::F32, {xv, wv});
    std::int32_t sum = arith(it.body, ScalarKind::Add, DType::F32, {acc, prod});
    store(it.body, out_buf, DType::F32, {in, im, ih, iw}, sum);
  }

  void emit_maxpool(const GraphOp &op, std::int32_t out_buf, std::int32_t x_buf, const Shape &x,
                    const Shape &out) {
    const auto &kernel = op.ints_attr("kernel_shape");
    const auto &strides = op.ints_attr("strides");
    const auto &pads = op.ints_attr("pads");
    const float neg_inf = -std::numeric_limits<float>::infinity();
    bool padded = pads[0] || pads[1] || pads[2] || pads[3];
    std::int32_t src = padded ? pad_input(x_buf, x, pads, neg_inf, "MaxPool") : x_buf;

    emit_fill(out_buf, out, DType::F32, neg_inf, "MaxPool.init");

    auto od = out.static_dims(); // N, C, OH, OW
    std::vector<LoopHandle> loops = define_loops(
        fn_, std::array{std::array<std::int64_t, 2>{0, od[0]}, std::array<std::int64_t, 2>{0, od[1]},
                        std::array<std::int64_t, 2>{0, od[2]}, std::array<std::int64_t, 2>{0, od[3]},
                        std::array<std::int64_t, 2>{0, kernel[0]},
                        std::array<std::int64_t, 2>{0, kernel[1]}});
    IterateOp &it = add_iterate(fn_, loops, 4, "MaxPool"); // kh, kw reduce
    AffineExpr in = AffineExpr::var(loops[0].id);
    AffineExpr ic = AffineExpr::var(loops[1].id);
    AffineExpr ih = AffineExpr::var(loops[2].id);
    AffineExpr iw = AffineExpr::var(loops[3].id);
    AffineExpr ikh = AffineExpr::var(loops[4].id);
    AffineExpr ikw = AffineExpr::var(loops[5].id);

    std::int32_t best = load(it.body, out_buf, DType::F32, {in, ic, ih, iw});
    AffineExpr src_h = ih.scaled(strides[0]).plus(ikh);
    AffineExpr src_w = iw.scaled(strides[1]).plus(ikw);
    std::int32_t xv = load(it.body, src, DType::F32, {in, ic, src_h, src_w});
    std::int32_t m = arith(it.body, ScalarKind::Max, DType::F32, {best, xv});
    store(it.body, out_buf, DType::F32, {in, ic, ih, iw}, m);
  }

  void emit_reduce(const GraphOp &op, std::int32_t out_buf, std::int32_t in_buf, const Shape &in,
                   const Shape &out, const std::string &tag) {
    auto axes = normalize_axes(op.ints_attr("axes"), in.rank());
    bool keepdims = op.i64_attr("keepdims") != 0;
    bool absolute = op.kind == OpKind::ReduceL1;
    DType dtype = fn_.buffers[static_cast<std::size_t>(in_buf)].type.dtype;

    emit_fill(out_buf, out, dtype, 0.0f, tag + ".init");

    std::vector<bool> is_reduced(static_cast<std::size_t>(in.rank()), false);
    for (std::int64_t a : axes)
      is_reduced[static_cast<std::size_t>(a)] = true;

    // parallel loops over kept dims first, then reduction loops
    std::vector<std::array<std::int64_t, 2>> bounds;
    std::vector<int> parallel_dims, reduced_dims;
    for (int i = 0; i < in.rank(); ++i)
      if (!is_reduced[static_cast<std::size_t>(i)])
        parallel_dims.push_back(i);
    for (int i = 0; i < in.rank(); ++i)
      if (is_reduced[static_cast<std::size_t>(i)])
        reduced_dims.push_back(i);
    for (int d : parallel_dims)
      bounds.push_back({0, *in.dim(d)});
    for (int d : reduced_dims)
      bounds.push_back({0, *in.dim(d)});
    if (bounds.empty())
      bounds.push_back({0, 1});
    std::vector<LoopHandle> loops = define_loops(fn_, bounds);
    IterateOp &it = add_iterate(fn_, loops, static_cast<int>(parallel_dims.size()), tag);

    std::vector<AffineExpr> in_idx(static_cast<std::size_t>(in.rank()));
    for (std::size_t i = 0; i < parallel_dims.size(); ++i)
      in_idx[static_cast<std::size_t>(parallel_dims[i])] = AffineExpr::var(loops[i].id);
    for (std::size_t i = 0; i < reduced_dims.size(); ++i)
      in_idx[static_cast<std::size_t>(reduced_dims[i])] =
          AffineExpr::var(loops[parallel_dims.size() + i].id);

    std::vector<AffineExpr> out_idx;
    for (int i = 0; i < in.rank(); ++i) {
      if (is_reduced[static_cast<std::size_t>(i)]) {
        if (keepdims)
          out_idx.push_back(AffineExpr::constant_expr(0));
      } else {
        out_idx.push_back(in_idx[static_cast<std::size_t>(i)]);
      }
    }

    std::int32_t acc = load(it.body, out_buf, dtype, out_idx);
    std::int32_t xv = load(it.body, in_buf, dtype, in_idx);
    if (absolute)
      xv = arith(it.body, ScalarKind::Abs, dtype, {xv});
    std::int32_t sum = arith(it.body, ScalarKind::Add, dtype, {acc, xv});
    store(it.body, out_buf, dtype, out_idx, sum);
  }

  const GraphFunction &graph_;
  LoopFunction fn_;
  std::map<ValueId, std::int32_t> buffers_;
};

} // namespace detail

/// Lowers a shape-inferred module with static shapes to the loop level.
inline LoopModule lower_graph_to_loops(const GraphModule &module) {
  verify_or_throw(module, "lowering input");
  LoopModule m = detail::LoopEmitter(module.main()).run(module.entry_point);
  verify_loop_module_or_throw(m, "lowered loop module");
  return m;
}

} // namespace loom
