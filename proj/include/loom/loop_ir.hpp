/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===---------------------------- loop_ir.hpp ----------------------------===//
//
// The loop level: iteration semantics and schedules are independent objects.
// An IterateOp owns original loops (with bounds) plus a scheduled list of
// handles derived from them by block / permute / skew; its body is written
// against original induction variables only, so inserting a schedule never
// touches the computation.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"
#include "loom/tensor.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace loom {

//===----------------------------------------------------------------------===//
// Affine expressions
//===----------------------------------------------------------------------===//

/// c0 + sum(ci * var_i) with integer coefficients. Variables are loop ids at
/// the loop level and materialized induction variables at the affine level.
struct AffineExpr {
  std::int64_t constant = 0;
  std::vector<std::pair<std::int32_t, std::int64_t>> terms; // sorted by var, no zero coeffs

  static AffineExpr constant_expr(std::int64_t c) {
    AffineExpr e;
    e.constant = c;
    return e;
  }
  static AffineExpr var(std::int32_t v, std::int64_t coeff = 1) {
    AffineExpr e;
    if (coeff != 0)
      e.terms.emplace_back(v, coeff);
    return e;
  }

  bool is_constant() const { return terms.empty(); }

  AffineExpr plus(const AffineExpr &other) const {
    AffineExpr out;
    out.constant = constant + other.constant;
    std::map<std::int32_t, std::int64_t> sums;
    for (const auto &[v, c] : terms)
      sums[v] += c;
    for (const auto &[v, c] : other.terms)
      sums[v] += c;
    for (const auto &[v, c] : sums)
      if (c != 0)
        out.terms.emplace_back(v, c);
    return out;
  }

  AffineExpr plus(std::int64_t c) const {
    AffineExpr out = *this;
    out.constant += c;
    return out;
  }

  AffineExpr scaled(std::int64_t f) const {
    AffineExpr out;
    if (f == 0)
      return out;
    out.constant = constant * f;
    for (const auto &[v, c] : terms)
      out.terms.emplace_back(v, c * f);
    return out;
  }

  /// Replaces every variable through `fn`; used to rewrite original-loop
  /// references into scheduled induction variables.
  template <typename F> AffineExpr substituted(F fn) const {
    AffineExpr out = constant_expr(constant);
    for (const auto &[v, c] : terms)
      out = out.plus(fn(v).scaled(c));
    return out;
  }

  std::int64_t eval(std::span<const std::int64_t> env) const {
    std::int64_t out = constant;
    for (const auto &[v, c] : terms)
      out += env[static_cast<std::size_t>(v)] * c;
    return out;
  }

  template <typename F> void visit_vars(F fn) const {
    for (const auto &[v, c] : terms)
      fn(v);
  }

  /// "d0 + 2" style rendering; `name` maps a variable to its spelling.
  template <typename F> std::string str(F name) const {
    std::string out;
    for (const auto &[v, c] : terms) {
      if (!out.empty())
        out += c < 0 ? " - " : " + ";
      else if (c < 0)
        out += "-";
      std::int64_t mag = c < 0 ? -c : c;
      if (mag != 1)
        out += std::to_string(mag) + " * ";
      out += name(v);
    }
    if (out.empty())
      return std::to_string(constant);
    if (constant > 0)
      out += " + " + std::to_string(constant);
    else if (constant < 0)
      out += " - " + std::to_string(-constant);
    return out;
  }

  bool operator==(const AffineExpr &) const = default;
};

//===----------------------------------------------------------------------===//
// Loop handles
//===----------------------------------------------------------------------===//

using LoopId = std::int32_t;

struct LoopHandle {
  LoopId id = -1;
  bool operator==(const LoopHandle &) const = default;
};

struct OriginalLoop {
  std::int64_t lb = 0;
  std::int64_t ub = 0;
};
struct BlockOuterLoop {
  LoopId parent = -1;
  std::int64_t tile = 1;
};
struct BlockInnerLoop {
  LoopId parent = -1;
  std::int64_t tile = 1;
  LoopId outer = -1; // the sibling BlockOuter its bounds hang off
};
struct SkewedLoop {
  LoopId parent = -1;
  LoopId along = -1;
  std::int64_t factor = 0;
};

struct LoopInfo {
  std::variant<OriginalLoop, BlockOuterLoop, BlockInnerLoop, SkewedLoop> origin;

  bool is_original() const { return std::holds_alternative<OriginalLoop>(origin); }
  const OriginalLoop &original() const { return std::get<OriginalLoop>(origin); }

  /// Parent in the derivation tree, -1 for originals.
  LoopId parent() const {
    if (const auto *b = std::get_if<BlockOuterLoop>(&origin))
      return b->parent;
    if (const auto *b = std::get_if<BlockInnerLoop>(&origin))
      return b->parent;
    if (const auto *s = std::get_if<SkewedLoop>(&origin))
      return s->parent;
    return -1;
  }
};

//===----------------------------------------------------------------------===//
// Scalar body ops
//===----------------------------------------------------------------------===//

enum class ScalarKind : std::uint8_t {
  Load,
  Store,
  ConstF,
  ConstI,
  Add,
  Sub,
  Mul,
  Div,
  Max,
  Abs,
  Exp,
  CmpGe,
  Select,
};

inline int scalar_arity(ScalarKind k) {
  switch (k) {
  case ScalarKind::Load:
  case ScalarKind::ConstF:
  case ScalarKind::ConstI:
    return 0;
  case ScalarKind::Store:
  case ScalarKind::Abs:
  case ScalarKind::Exp:
    return 1;
  case ScalarKind::Add:
  case ScalarKind::Sub:
  case ScalarKind::Mul:
  case ScalarKind::Div:
  case ScalarKind::Max:
  case ScalarKind::CmpGe:
    return 2;
  case ScalarKind::Select:
    return 3;
  }
  return 0;
}

/// An operand is a previously computed body value or an affine expression
/// over induction variables.
struct ScalarOperand {
  enum Tag { Value, Expr } tag = Value;
  std::int32_t value = -1;
  AffineExpr expr;

  static ScalarOperand val(std::int32_t v) { return ScalarOperand{Value, v, {}}; }
  static ScalarOperand of(AffineExpr e) { return ScalarOperand{Expr, -1, std::move(e)}; }
};

/// One body instruction. Loads/stores address a buffer either with one
/// expression per dimension or with a single flat row-major offset.
struct ScalarOp {
  ScalarKind kind;
  DType dtype = DType::F32;
  std::int32_t buffer = -1;
  std::vector<AffineExpr> indices;
  std::vector<ScalarOperand> args;
  float fval = 0.0f;
  std::int64_t ival = 0;
};

//===----------------------------------------------------------------------===//
// Module structure
//===----------------------------------------------------------------------===//

struct BufferDecl {
  std::string name;
  TensorType type; // shape always static
  std::optional<TensorValue> init;
  bool is_input = false;
};

struct IterateOp {
  std::vector<LoopId> scheduled;
  std::vector<LoopId> originals;
  /// originals[0..num_schedulable) are data-parallel loops; the rest are
  /// reduction loops, which user-facing schedules never touch.
  int num_schedulable = 0;
  std::vector<ScalarOp> body;
  /// Provenance label, e.g. "MatMul" for the compute nest and "MatMul.init"
  /// for its helpers. The tile flag matches on the bare op name.
  std::string tag;
};

struct LoopFunction {
  std::string name;
  std::vector<BufferDecl> buffers;
  std::vector<LoopInfo> loops;
  std::vector<IterateOp> iterates;
  std::vector<std::int32_t> results;

  LoopId new_loop(LoopInfo info) {
    loops.push_back(std::move(info));
    return static_cast<LoopId>(loops.size() - 1);
  }
  const LoopInfo &loop(LoopId id) const { return loops.at(static_cast<std::size_t>(id)); }

  /// Walks the derivation chain up to the original loop.
  LoopId root_original(LoopId id) const {
    while (!loop(id).is_original())
      id = loop(id).parent();
    return id;
  }

  /// Handles derived directly from `id` (0, 1, or 2 of them).
  std::vector<LoopId> derived_children(LoopId id) const {
    std::vector<LoopId> out;
    for (std::size_t i = 0; i < loops.size(); ++i)
      if (!loops[i].is_original() && loops[i].parent() == id)
        out.push_back(static_cast<LoopId>(i));
    return out;
  }

  /// Current leaves of the derivation tree rooted at `id`, in creation order.
  void collect_leaves(LoopId id, std::vector<LoopId> &out) const {
    std::vector<LoopId> children = derived_children(id);
    if (children.empty()) {
      out.push_back(id);
      return;
    }
    for (LoopId c : children)
      collect_leaves(c, out);
  }
};

struct LoopModule {
  LoopFunction fn;
  EntryPointDescriptor entry_point;
};

//===----------------------------------------------------------------------===//
// Loop construction and schedules
//===----------------------------------------------------------------------===//

/// Fresh original loops with the given [lb, ub) bounds.
inline std::vector<LoopHandle> define_loops(LoopFunction &fn,
                                            std::span<const std::array<std::int64_t, 2>> bounds) {
  if (bounds.empty())
    fail("InvalidBounds", "define_loops needs at least one loop");
  std::vector<LoopHandle> out;
  for (const auto &b : bounds) {
    if (b[0] >= b[1])
      fail("InvalidBounds",
           "empty loop bounds [" + std::to_string(b[0]) + ", " + std::to_string(b[1]) + ")");
    out.push_back(LoopHandle{fn.new_loop(LoopInfo{OriginalLoop{b[0], b[1]}})});
  }
  return out;
}

inline std::vector<LoopHandle> define_loops(LoopFunction &fn,
                                            std::initializer_list<std::array<std::int64_t, 2>> bounds) {
  return define_loops(fn, std::span<const std::array<std::int64_t, 2>>(bounds.begin(), bounds.size()));
}

namespace detail {

inline std::size_t scheduled_position(const IterateOp &it, LoopHandle l) {
  for (std::size_t i = 0; i < it.scheduled.size(); ++i)
    if (it.scheduled[i] == l.id)
      return i;
  fail("InvalidSchedule", "loop handle is not in this iterate's scheduled list");
}

} // namespace detail

/// Splits `l` into an outer loop stepping by `tile` and an intra-tile inner
/// loop; the pair replaces `l` in the scheduled list (outer first).
inline std::pair<LoopHandle, LoopHandle> block(LoopFunction &fn, IterateOp &it, LoopHandle l,
                                               std::int64_t tile) {
  if (tile < 1)
    fail("InvalidTile", "tile size must be >= 1, got " + std::to_string(tile));
  std::size_t pos = detail::scheduled_position(it, l);
  LoopId outer = fn.new_loop(LoopInfo{BlockOuterLoop{l.id, tile}});
  LoopId inner = fn.new_loop(LoopInfo{BlockInnerLoop{l.id, tile, outer}});
  it.scheduled[pos] = outer;
  it.scheduled.insert(it.scheduled.begin() + static_cast<std::ptrdiff_t>(pos) + 1, inner);
  return {LoopHandle{outer}, LoopHandle{inner}};
}

/// Reorders the scheduled list: new position i holds old position perm[i].
/// Interchange only; semantics are unchanged.
inline void permute(IterateOp &it, std::span<const int> perm) {
  if (perm.size() != it.scheduled.size())
    fail("InvalidPermutation", "permutation arity " + std::to_string(perm.size()) +
                                   " does not match " + std::to_string(it.scheduled.size()) +
                                   " scheduled loops");
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= perm.size() || seen[static_cast<std::size_t>(p)])
      fail("InvalidPermutation", "not a permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  std::vector<LoopId> out(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    out[i] = it.scheduled[static_cast<std::size_t>(perm[i])];
  it.scheduled = std::move(out);
}

/// Shifts `l` by factor * iv(along): the derived loop enumerates
/// j' = j + factor * i, recovering j = j' - factor * i at lowering. `along`
/// must be an original loop of the same iterate, enclosing `l` in the
/// scheduled order.
inline LoopHandle skew(LoopFunction &fn, IterateOp &it, LoopHandle l, LoopHandle along,
                       std::int64_t factor) {
  std::size_t pos = detail::scheduled_position(it, l);
  if (std::find(it.originals.begin(), it.originals.end(), along.id) == it.originals.end() ||
      !fn.loop(along.id).is_original())
    fail("InvalidSkew", "skew must be along an original loop of the same iterate");
  if (fn.root_original(l.id) == along.id)
    fail("InvalidSkew", "cannot skew a loop along itself");
  std::vector<LoopId> along_leaves;
  fn.collect_leaves(along.id, along_leaves);
  for (LoopId leaf : along_leaves) {
    std::size_t leaf_pos = detail::scheduled_position(it, LoopHandle{leaf});
    if (leaf_pos >= pos)
      fail("InvalidSkew", "skew target must be enclosed by the along loop in the scheduled order");
  }
  LoopId skewed = fn.new_loop(LoopInfo{SkewedLoop{l.id, along.id, factor}});
  it.scheduled[pos] = skewed;
  return LoopHandle{skewed};
}

/// Appends an iterate whose schedule starts out as the original loops.
inline IterateOp &add_iterate(LoopFunction &fn, const std::vector<LoopHandle> &loops,
                              int num_schedulable, std::string tag = "") {
  IterateOp it;
  for (LoopHandle l : loops) {
    it.scheduled.push_back(l.id);
    it.originals.push_back(l.id);
  }
  it.num_schedulable = num_schedulable;
  it.tag = std::move(tag);
  fn.iterates.push_back(std::move(it));
  return fn.iterates.back();
}

//===----------------------------------------------------------------------===//
// Verifier
//===----------------------------------------------------------------------===//

namespace detail {

inline void verify_iterate(const LoopFunction &fn, const IterateOp &it, int index,
                           std::vector<Diagnostic> &diags) {
  auto diag = [&](const std::string &code, const std::string &msg) {
    diags.push_back({code, msg, index});
  };

  for (LoopId o : it.originals) {
    if (o < 0 || static_cast<std::size_t>(o) >= fn.loops.size()) {
      diag("InvalidLoopRef", "original loop id out of range");
      return;
    }
    if (!fn.loop(o).is_original()) {
      diag("InvalidLoopRef", "loop " + std::to_string(o) + " is not an original loop");
      continue;
    }
    const OriginalLoop &orig = fn.loop(o).original();
    if (orig.lb >= orig.ub)
      diag("InvalidBounds", "loop " + std::to_string(o) + " has empty bounds");
  }
  if (it.num_schedulable < 0 || it.num_schedulable > static_cast<int>(it.originals.size()))
    diag("InvalidLoopRef", "num_schedulable out of range");

  // The scheduled list must be exactly the derivation-tree leaves of the
  // original loops, each appearing once.
  std::vector<LoopId> leaves;
  for (LoopId o : it.originals)
    if (fn.loop(o).is_original())
      fn.collect_leaves(o, leaves);
  std::vector<LoopId> expect = leaves;
  std::vector<LoopId> got = it.scheduled;
  std::sort(expect.begin(), expect.end());
  std::sort(got.begin(), got.end());
  if (expect != got)
    diag("ScheduleCoverage",
         "scheduled list does not cover the original loops exactly once (expected " +
             std::to_string(expect.size()) + " leaves, got " + std::to_string(got.size()) + ")");

  std::set<LoopId> original_set(it.originals.begin(), it.originals.end());
  for (std::size_t i = 0; i < it.body.size(); ++i) {
    const ScalarOp &op = it.body[i];
    auto check_expr = [&](const AffineExpr &e) {
      e.visit_vars([&](std::int32_t v) {
        if (!original_set.count(v))
          diag("IllegalIVUse", "body op #" + std::to_string(i) +
                                   " references a non-original induction variable");
      });
    };
    for (const AffineExpr &e : op.indices)
      check_expr(e);
    int value_args = 0;
    for (const ScalarOperand &a : op.args) {
      if (a.tag == ScalarOperand::Expr) {
        check_expr(a.expr);
      } else {
        ++value_args;
        if (a.value < 0 || static_cast<std::size_t>(a.value) >= i)
          diag("InvalidScalarOperand",
               "body op #" + std::to_string(i) + " uses an undefined body value");
        else if (it.body[static_cast<std::size_t>(a.value)].kind == ScalarKind::Store)
          diag("InvalidScalarOperand", "body op #" + std::to_string(i) + " consumes a store");
      }
    }
    (void)value_args;
    if (static_cast<int>(op.args.size()) != scalar_arity(op.kind))
      diag("InvalidScalarOperand", "body op #" + std::to_string(i) + " has wrong arity");

    if (op.kind == ScalarKind::Load || op.kind == ScalarKind::Store) {
      if (op.buffer < 0 || static_cast<std::size_t>(op.buffer) >= fn.buffers.size()) {
        diag("InvalidBufferRef", "body op #" + std::to_string(i) + " addresses no buffer");
      } else {
        int rank = fn.buffers[static_cast<std::size_t>(op.buffer)].type.shape.rank();
        if (static_cast<int>(op.indices.size()) != rank && op.indices.size() != 1)
          diag("IndexArityMismatch",
               "body op #" + std::to_string(i) + " indexes rank-" + std::to_string(rank) +
                   " buffer with " + std::to_string(op.indices.size()) + " expressions");
      }
    }
  }
}

} // namespace detail

inline std::vector<Diagnostic> verify_loop_module(const LoopModule &m) {
  std::vector<Diagnostic> diags;
  const LoopFunction &fn = m.fn;

  for (const BufferDecl &b : fn.buffers) {
    if (!b.type.shape.is_static())
      diags.push_back({"DynamicShapeUnsupported", "buffer " + b.name + " has a dynamic shape", -1});
    if (b.init && !(b.init->type() == b.type))
      diags.push_back({"InvalidBufferRef", "buffer " + b.name + " init disagrees with its type", -1});
  }
  for (std::int32_t r : fn.results)
    if (r < 0 || static_cast<std::size_t>(r) >= fn.buffers.size())
      diags.push_back({"InvalidBufferRef", "function result indexes no buffer", -1});

  for (std::size_t i = 0; i < fn.iterates.size(); ++i)
    detail::verify_iterate(fn, fn.iterates[i], static_cast<int>(i), diags);

  // Dataflow through buffers: anything loaded must be an input, initialized,
  // or stored by this or an earlier iterate.
  std::set<std::int32_t> written;
  for (std::size_t b = 0; b < fn.buffers.size(); ++b)
    if (fn.buffers[b].is_input || fn.buffers[b].init)
      written.insert(static_cast<std::int32_t>(b));
  for (std::size_t i = 0; i < fn.iterates.size(); ++i) {
    for (const ScalarOp &op : fn.iterates[i].body)
      if (op.kind == ScalarKind::Store)
        written.insert(op.buffer);
    for (const ScalarOp &op : fn.iterates[i].body)
      if (op.kind == ScalarKind::Load && !written.count(op.buffer))
        diags.push_back({"ReadBeforeWrite",
                         "iterate #" + std::to_string(i) + " loads buffer '" +
                             fn.buffers[static_cast<std::size_t>(op.buffer)].name +
                             "' before any store",
                         static_cast<int>(i)});
  }

  if (m.entry_point.num_outputs < 1)
    diags.push_back({"InvalidEntryPointCounts", "entry point needs num_outputs >= 1", -1});
  return diags;
}

inline void verify_loop_module_or_throw(const LoopModule &m, const std::string &context) {
  std::vector<Diagnostic> diags = verify_loop_module(m);
  if (!diags.empty())
    fail(diags.front().code, context + ": " + diags.front().str());
}

} // namespace loom
