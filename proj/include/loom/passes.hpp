/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===----------------------------- passes.hpp ----------------------------===//
//
// Graph-level optimization passes and the pass pipeline:
//
//   decompose  - rewrite derived ops (ReduceL1) into the lowered subset
//   rewrite    - greedy pattern set: MulAddToGemm, IdentityElimination
//   constprop  - Add normalization rules plus all-constant folding
//
// Every pass takes and returns a module by value; the pipeline re-verifies
// after each one.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/constprop.hpp"
#include "loom/graph.hpp"
#include "loom/shape_infer.hpp"

#include <functional>
#include <string>
#include <vector>

namespace loom {

/// Rewrites every ReduceL1 into ReduceSum(Abs(x)) with the same axes and
/// keepdims; everything else is untouched.
inline GraphModule pass_decompose(GraphModule module) {
  GraphFunction &fn = module.main();
  for (std::size_t i = 0; i < fn.ops.size(); ++i) {
    if (fn.ops[i].kind != OpKind::ReduceL1)
      continue;
    GraphOp reduce = fn.ops[i];
    ValueId abs_result = fn.new_value(fn.type_of(reduce.operands[0]));
    GraphOp abs{OpKind::Abs, {reduce.operands[0]}, {abs_result}, {}};
    reduce.kind = OpKind::ReduceSum;
    reduce.operands = {abs_result};
    fn.ops[i] = std::move(reduce);
    fn.ops.insert(fn.ops.begin() + static_cast<std::ptrdiff_t>(i), std::move(abs));
    ++i; // skip over the ReduceSum we just placed
  }
  return module;
}

namespace detail {

inline void replace_uses(GraphFunction &fn, ValueId from, ValueId to) {
  for (GraphOp &op : fn.ops)
    for (ValueId &o : op.operands)
      if (o == from)
        o = to;
  for (ValueId &r : fn.results)
    if (r == from)
      r = to;
}

/// Add(MatMul(a, b), c) -> Gemm(a, b, c) when the MatMul result has exactly
/// one use, everything is 2-D and static, and c broadcasts into the result.
inline bool try_mul_add_to_gemm(GraphFunction &fn, std::size_t i) {
  GraphOp &add = fn.ops[i];
  if (add.kind != OpKind::Add)
    return false;
  int mm_index = -1;
  if (!fn.is_constant(add.operands[0], nullptr)) {
    int def = fn.defining_op(add.operands[0]);
    if (def >= 0 && fn.ops[static_cast<std::size_t>(def)].kind == OpKind::MatMul)
      mm_index = def;
  }
  if (mm_index < 0)
    return false;
  const GraphOp &mm = fn.ops[static_cast<std::size_t>(mm_index)];
  if (fn.use_count(mm.results[0]) != 1)
    return false;
  const Shape &out = fn.type_of(mm.results[0]).shape;
  const Shape &c = fn.type_of(add.operands[1]).shape;
  if (!out.is_static() || out.rank() != 2 || !c.is_static() || c.rank() > 2 ||
      !unidirectionally_broadcastable(c, out))
    return false;

  GraphOp gemm;
  gemm.kind = OpKind::Gemm;
  gemm.operands = {mm.operands[0], mm.operands[1], add.operands[1]};
  gemm.results = add.results;
  GraphBuilder::materialize_defaults(op_spec(OpKind::Gemm), gemm.attributes);
  fn.ops[i] = std::move(gemm);
  fn.ops.erase(fn.ops.begin() + mm_index);
  return true;
}

inline bool try_identity_elimination(GraphFunction &fn, std::size_t i) {
  GraphOp &op = fn.ops[i];
  if (op.kind != OpKind::Identity)
    return false;
  replace_uses(fn, op.results[0], op.operands[0]);
  fn.ops.erase(fn.ops.begin() + static_cast<std::ptrdiff_t>(i));
  return true;
}

} // namespace detail

/// Greedy post-order fixpoint over the built-in pattern set. A sweep walks
/// the op list (operands before users) and restarts on the first match;
/// more than 64 sweeps means the rule set stopped converging.
inline GraphModule pass_graph_rewrite(GraphModule module) {
  GraphFunction &fn = module.main();
  for (int sweep = 0; sweep < 64; ++sweep) {
    bool matched = false;
    for (std::size_t i = 0; i < fn.ops.size() && !matched; ++i)
      matched = detail::try_mul_add_to_gemm(fn, i) || detail::try_identity_elimination(fn, i);
    if (!matched)
      return module;
  }
  fail("FixpointOverflow", "graph rewrite did not reach a fixpoint within 64 sweeps");
}

//===----------------------------------------------------------------------===//
// Pipeline
//===----------------------------------------------------------------------===//

struct Pass {
  std::string name;
  bool enabled = true;
  std::function<GraphModule(GraphModule)> run;
};

/// Ordered pass list; disabled passes stay in the list so tooling can show
/// the full pipeline. Modules are re-verified after every pass.
class PassPipeline {
public:
  PassPipeline &add(std::string name, std::function<GraphModule(GraphModule)> fn,
                    bool enabled = true) {
    passes_.push_back(Pass{std::move(name), enabled, std::move(fn)});
    return *this;
  }

  GraphModule run(GraphModule module) const {
    for (const Pass &pass : passes_) {
      if (!pass.enabled)
        continue;
      module = pass.run(std::move(module));
      verify_or_throw(module, "after pass '" + pass.name + "'");
    }
    return module;
  }

  const std::vector<Pass> &passes() const { return passes_; }

  /// The default graph pipeline: decompose, shape-inference, rewrite,
  /// constprop. Shape inference cannot be disabled.
  static PassPipeline standard(bool decompose = true, bool rewrite = true,
                               bool constprop = true) {
    PassPipeline p;
    p.add("decompose", pass_decompose, decompose);
    p.add("shape-inference", pass_shape_inference, true);
    p.add("rewrite", pass_graph_rewrite, rewrite);
    p.add("constprop", pass_constprop, constprop);
    return p;
  }

private:
  std::vector<Pass> passes_;
};

} // namespace loom
