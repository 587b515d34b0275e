/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===---------------------------- constprop.hpp --------------------------===//
//
// Constant propagation: algebraic normalization of Add followed by folding
// of every op whose operands are all constant. Folding evaluates with the
// same kernels as reference evaluation, so folded-then-run equals run.
//
// Normalization rules (x, y non-constant; c, c1, c2 constant):
//   (1) c + x            =>  x + c
//   (2) (x + c1) + c2    =>  x + (c1 + c2)        c1 + c2 folds immediately
//   (3) (x + c) + y      =>  (x + y) + c
//   (4) x + (y + c)      =>  (x + y) + c
//   (5) (x + c1)+(y + c2) => (x + y) + (c1 + c2)  c1 + c2 folds immediately
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"
#include "loom/graph_eval.hpp"
#include "loom/shape_infer.hpp"

#include <optional>

namespace loom {

namespace detail {

/// Matches v against "non-constant Add result with a constant right operand",
/// i.e. the (x + c) building block of rules 2-5. The Add itself must be a
/// non-constant op result whose left operand is non-constant.
struct AddWithConst {
  ValueId x;
  ValueId c;
  int op_index;
};

inline std::optional<AddWithConst> match_add_with_const(const GraphFunction &fn, ValueId v) {
  int def = fn.defining_op(v);
  if (def < 0)
    return std::nullopt;
  const GraphOp &op = fn.ops[static_cast<std::size_t>(def)];
  if (op.kind != OpKind::Add)
    return std::nullopt;
  if (fn.is_constant(op.operands[0]) || !fn.is_constant(op.operands[1]))
    return std::nullopt;
  return AddWithConst{op.operands[0], op.operands[1], def};
}

/// Inserts Constant(a + b) right before `at`; returns its result value.
inline ValueId fold_constant_add(GraphFunction &fn, std::size_t at, ValueId a, ValueId b) {
  const TensorValue *va = fn.constant_payload(a);
  const TensorValue *vb = fn.constant_payload(b);
  AttrMap add_attrs;
  TensorValue sum = eval_op(OpKind::Add, add_attrs, std::array{*va, *vb});
  ValueId result = fn.new_value(sum.type());
  GraphOp constant{OpKind::Constant, {}, {result}, {{"value", std::move(sum)}}};
  fn.ops.insert(fn.ops.begin() + static_cast<std::ptrdiff_t>(at), std::move(constant));
  return result;
}

/// Inserts Add(x, y) right before `at`; the result type follows the
/// broadcast rule over what is known of the operand shapes.
inline ValueId insert_add(GraphFunction &fn, std::size_t at, ValueId x, ValueId y) {
  const TensorType &tx = fn.type_of(x);
  const TensorType &ty = fn.type_of(y);
  GraphOp probe{OpKind::Add, {x, y}, {}, {}};
  TensorType type{tx.dtype, broadcast_partial(probe, static_cast<int>(at), tx.shape, ty.shape)};
  ValueId result = fn.new_value(type);
  GraphOp add{OpKind::Add, {x, y}, {result}, {}};
  fn.ops.insert(fn.ops.begin() + static_cast<std::ptrdiff_t>(at), std::move(add));
  return result;
}

/// Applies the first matching normalization rule at op `i`. Rules are tried
/// most-specific first (1, 2, 5, 3, 4) so each paper form rewrites to its
/// own right-hand side.
inline bool normalize_add_at(GraphFunction &fn, std::size_t i) {
  if (fn.ops[i].kind != OpKind::Add)
    return false;
  ValueId lhs = fn.ops[i].operands[0];
  ValueId rhs = fn.ops[i].operands[1];
  bool lhs_const = fn.is_constant(lhs);
  bool rhs_const = fn.is_constant(rhs);

  // (1) c + x => x + c
  if (lhs_const && !rhs_const) {
    std::swap(fn.ops[i].operands[0], fn.ops[i].operands[1]);
    return true;
  }

  auto lhs_add = match_add_with_const(fn, lhs);
  auto rhs_add = match_add_with_const(fn, rhs);

  // (2) (x + c1) + c2 => x + (c1 + c2)
  if (lhs_add && rhs_const) {
    ValueId folded = fold_constant_add(fn, i, lhs_add->c, rhs);
    GraphOp &add = fn.ops[i + 1]; // shifted by the inserted constant
    add.operands = {lhs_add->x, folded};
    return true;
  }

  // (5) (x + c1) + (y + c2) => (x + y) + (c1 + c2)
  if (lhs_add && rhs_add) {
    ValueId xy = insert_add(fn, i, lhs_add->x, rhs_add->x);
    ValueId folded = fold_constant_add(fn, i + 1, lhs_add->c, rhs_add->c);
    GraphOp &add = fn.ops[i + 2];
    add.operands = {xy, folded};
    return true;
  }

  // (3) (x + c) + y => (x + y) + c
  if (lhs_add && !rhs_const) {
    ValueId xy = insert_add(fn, i, lhs_add->x, rhs);
    GraphOp &add = fn.ops[i + 1];
    add.operands = {xy, lhs_add->c};
    return true;
  }

  // (4) x + (y + c) => (x + y) + c
  if (!lhs_const && rhs_add) {
    ValueId xy = insert_add(fn, i, lhs, rhs_add->x);
    GraphOp &add = fn.ops[i + 1];
    add.operands = {xy, rhs_add->c};
    return true;
  }

  return false;
}

/// Sweeps to normalization fixpoint, restarting after every applied rule.
/// The rules strictly shrink (constants in left positions, Adds reachable
/// through constant subtrees), so 64 sweeps per round is generous.
inline bool normalize_adds(GraphFunction &fn) {
  bool any = false;
  for (int sweep = 0; sweep < 64; ++sweep) {
    bool matched = false;
    for (std::size_t i = 0; i < fn.ops.size() && !matched; ++i)
      matched = normalize_add_at(fn, i);
    if (!matched)
      return any;
    any = true;
  }
  fail("FixpointOverflow", "Add normalization did not reach a fixpoint within 64 sweeps");
}

/// Folds every non-Constant op whose operands are all constants.
inline bool fold_constants(GraphFunction &fn) {
  bool any = false;
  for (std::size_t i = 0; i < fn.ops.size(); ++i) {
    GraphOp &op = fn.ops[i];
    if (op.kind == OpKind::Constant || op.operands.empty())
      continue;
    std::vector<TensorValue> args;
    bool all_const = true;
    for (ValueId o : op.operands) {
      const TensorValue *v = fn.constant_payload(o);
      if (!v) {
        all_const = false;
        break;
      }
      args.push_back(*v);
    }
    if (!all_const)
      continue;
    TensorValue folded = eval_op(op.kind, op.attributes, args);
    fn.type_of(op.results[0]) = folded.type();
    fn.ops[i] = GraphOp{OpKind::Constant, {}, op.results, {{"value", std::move(folded)}}};
    any = true;
  }
  return any;
}

/// Removes ops none of whose results are used; all graph ops are pure.
inline void erase_dead_ops(GraphFunction &fn) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = fn.ops.size(); i-- > 0;) {
      bool used = false;
      for (ValueId r : fn.ops[i].results)
        if (fn.use_count(r) > 0)
          used = true;
      if (!used) {
        fn.ops.erase(fn.ops.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
      }
    }
  }
}

} // namespace detail

/// Normalize-then-fold to fixpoint, then drop ops that became dead. After
/// this pass no op other than Constant has all-constant operands.
inline GraphModule pass_constprop(GraphModule module) {
  GraphFunction &fn = module.main();
  for (int round = 0; round < 64; ++round) {
    bool normalized = detail::normalize_adds(fn);
    bool folded = detail::fold_constants(fn);
    if (!normalized && !folded) {
      detail::erase_dead_ops(fn);
      return module;
    }
  }
  fail("FixpointOverflow", "constant propagation did not reach a fixpoint within 64 rounds");
}

} // namespace loom
