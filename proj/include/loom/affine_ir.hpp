/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===---------------------------- affine_ir.hpp --------------------------===//
//
// Fully materialized affine loop nests plus the loop-to-affine conversion.
// Each iterate becomes one nest ordered by its scheduled list; derived
// handles expand into loops whose bounds are affine expressions of enclosing
// induction variables, and the body's original induction variables are
// rewritten into expressions over the materialized ones.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/loop_ir.hpp"

#include <map>
#include <string>
#include <vector>

namespace loom {

struct AffineFor {
  std::int32_t iv = -1;
  AffineExpr lower;
  std::vector<AffineExpr> upper; // effective bound is min over the list
  std::int64_t step = 1;
};

struct AffineNest {
  std::vector<AffineFor> loops; // outermost first
  std::vector<ScalarOp> body;
  std::string tag;
};

struct AffineProgram {
  std::string name;
  std::vector<BufferDecl> buffers;
  std::vector<AffineNest> nests;
  std::vector<std::int32_t> results;
  EntryPointDescriptor entry_point;
  std::int32_t num_ivs = 0;
};

namespace detail {

struct LoopRange {
  AffineExpr lower;
  std::vector<AffineExpr> upper;
  std::int64_t step = 1;
};

class ScheduleExpander {
public:
  ScheduleExpander(const LoopFunction &fn, std::int32_t &iv_counter)
      : fn_(fn), iv_counter_(iv_counter) {}

  AffineNest expand(const IterateOp &it) {
    AffineNest nest;
    nest.tag = it.tag;
    for (LoopId h : it.scheduled) {
      LoopRange range = range_of(h);
      std::int32_t iv = iv_counter_++;
      nest.loops.push_back(AffineFor{iv, std::move(range.lower), std::move(range.upper), range.step});
      materialized_[h] = iv;
    }

    std::map<LoopId, AffineExpr> original_iv;
    for (LoopId o : it.originals)
      original_iv[o] = value_of(o);
    auto subst = [&](const AffineExpr &e) {
      return e.substituted([&](std::int32_t v) { return original_iv.at(v); });
    };
    for (const ScalarOp &op : it.body) {
      ScalarOp lowered = op;
      for (AffineExpr &e : lowered.indices)
        e = subst(e);
      for (ScalarOperand &a : lowered.args)
        if (a.tag == ScalarOperand::Expr)
          a.expr = subst(a.expr);
      nest.body.push_back(std::move(lowered));
    }
    return nest;
  }

private:
  /// The original-coordinate value a handle stands for, as an expression
  /// over already-materialized induction variables.
  AffineExpr value_of(LoopId h) {
    auto it = materialized_.find(h);
    if (it != materialized_.end())
      return AffineExpr::var(it->second);
    std::vector<LoopId> children = fn_.derived_children(h);
    if (children.empty())
      fail("ScheduleExpansionError",
           "loop " + std::to_string(h) +
               " is needed before the scheduled order materializes it (illegal interchange)");
    for (LoopId c : children) {
      if (const auto *inner = std::get_if<BlockInnerLoop>(&fn_.loop(c).origin)) {
        (void)inner;
        return value_of(c); // the intra-tile loop enumerates the parent's values
      }
      if (const auto *skewed = std::get_if<SkewedLoop>(&fn_.loop(c).origin))
        return value_of(c).plus(value_of(skewed->along).scaled(-skewed->factor));
    }
    fail("ScheduleExpansionError",
         "loop " + std::to_string(h) + " has a derivation this expansion cannot resolve");
  }

  LoopRange range_of(LoopId h) {
    const LoopInfo &info = fn_.loop(h);
    if (const auto *orig = std::get_if<OriginalLoop>(&info.origin)) {
      return LoopRange{AffineExpr::constant_expr(orig->lb),
                       {AffineExpr::constant_expr(orig->ub)},
                       1};
    }
    if (const auto *outer = std::get_if<BlockOuterLoop>(&info.origin)) {
      LoopRange r = range_of(outer->parent);
      r.step *= outer->tile;
      return r;
    }
    if (const auto *inner = std::get_if<BlockInnerLoop>(&info.origin)) {
      LoopRange parent = range_of(inner->parent);
      AffineExpr outer_iv = value_of(inner->outer);
      LoopRange r;
      r.lower = outer_iv;
      r.step = parent.step;
      r.upper.push_back(outer_iv.plus(inner->tile * parent.step));
      // When the parent range divides evenly into tiles, the parent bound
      // can never be the tighter one; dropping it keeps bounds minimal.
      bool divisible = parent.lower.is_constant() && parent.upper.size() == 1 &&
                       parent.upper[0].is_constant() &&
                       (parent.upper[0].constant - parent.lower.constant) %
                               (inner->tile * parent.step) ==
                           0;
      if (!divisible)
        for (AffineExpr &u : parent.upper)
          r.upper.push_back(std::move(u));
      return r;
    }
    const auto &skewed = std::get<SkewedLoop>(info.origin);
    LoopRange r = range_of(skewed.parent);
    AffineExpr shift = value_of(skewed.along).scaled(skewed.factor);
    r.lower = r.lower.plus(shift);
    for (AffineExpr &u : r.upper)
      u = u.plus(shift);
    return r;
  }

  const LoopFunction &fn_;
  std::int32_t &iv_counter_;
  std::map<LoopId, std::int32_t> materialized_;
};

} // namespace detail

/// Expands every iterate's schedule into affine loops. Throws
/// ScheduleExpansionError when a scheduled order needs an induction variable
/// before its loop is reached (an illegal interchange).
inline AffineProgram lower_loops_to_affine(const LoopModule &m) {
  verify_loop_module_or_throw(m, "loop-to-affine input");
  AffineProgram program;
  program.name = m.fn.name;
  program.buffers = m.fn.buffers;
  program.results = m.fn.results;
  program.entry_point = m.entry_point;

  std::int32_t iv_counter = 0;
  for (const IterateOp &it : m.fn.iterates) {
    detail::ScheduleExpander expander(m.fn, iv_counter);
    program.nests.push_back(expander.expand(it));
  }
  program.num_ivs = iv_counter;
  return program;
}

} // namespace loom
