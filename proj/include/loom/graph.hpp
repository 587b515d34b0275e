/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===----------------------------- graph.hpp -----------------------------===//
//
// The dataflow-graph level: an SSA graph of tensor operations with a
// data-driven op registry, a structural verifier, and structural equality.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/support.hpp"
#include "loom/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace loom {

//===----------------------------------------------------------------------===//
// Attributes
//===----------------------------------------------------------------------===//

/// Static compile-time data attached to an op: a float, an integer, an
/// integer list, or a whole tensor (Constant payloads).
using AttributeValue = std::variant<float, std::int64_t, std::vector<std::int64_t>, TensorValue>;

inline bool attribute_equal(const AttributeValue &a, const AttributeValue &b) {
  if (a.index() != b.index())
    return false;
  if (const auto *t = std::get_if<TensorValue>(&a))
    return t->bit_equal(std::get<TensorValue>(b));
  if (const auto *f = std::get_if<float>(&a)) {
    float y = std::get<float>(b);
    return std::memcmp(f, &y, sizeof(float)) == 0;
  }
  if (const auto *i = std::get_if<std::int64_t>(&a))
    return *i == std::get<std::int64_t>(b);
  return std::get<std::vector<std::int64_t>>(a) == std::get<std::vector<std::int64_t>>(b);
}

using AttrMap = std::map<std::string, AttributeValue>;

//===----------------------------------------------------------------------===//
// Op registry
//===----------------------------------------------------------------------===//

enum class OpKind : std::uint8_t {
  Add,
  Mul,
  Sub,
  Abs,
  Exp,
  Relu,
  LeakyRelu,
  MatMul,
  Gemm,
  Conv,
  MaxPool,
  ReduceSum,
  ReduceL1,
  Reshape,
  Identity,
  Constant,
};

enum class AttrType : std::uint8_t { F32, I64, I64List, Tensor };

struct AttrSpec {
  std::string_view name;
  AttrType type;
  bool required = false;
  /// Default that gets materialized at construction when absent (unused for
  /// required attributes).
  AttributeValue default_value = std::int64_t(0);
};

/// One registry row: everything the rest of the compiler needs to know about
/// an op kind. Shape-inference and lowering rules key off `kind`.
struct OpSpec {
  OpKind kind;
  std::string_view name;
  int num_operands;
  int num_results;
  /// F32-only ops reject i64 operands during shape inference.
  bool f32_only;
  std::vector<AttrSpec> attrs;
};

inline const std::vector<OpSpec> &op_registry() {
  static const std::vector<OpSpec> table = {
      {OpKind::Add, "Add", 2, 1, false, {}},
      {OpKind::Mul, "Mul", 2, 1, false, {}},
      {OpKind::Sub, "Sub", 2, 1, false, {}},
      {OpKind::Abs, "Abs", 1, 1, false, {}},
      {OpKind::Exp, "Exp", 1, 1, true, {}},
      {OpKind::Relu, "Relu", 1, 1, true, {}},
      {OpKind::LeakyRelu, "LeakyRelu", 1, 1, true, {{"alpha", AttrType::F32, false, 0.01f}}},
      {OpKind::MatMul, "MatMul", 2, 1, true, {}},
      {OpKind::Gemm,
       "Gemm",
       3,
       1,
       true,
       {{"alpha", AttrType::F32, false, 1.0f}, {"beta", AttrType::F32, false, 1.0f}}},
      {OpKind::Conv,
       "Conv",
       2,
       1,
       true,
       {{"strides", AttrType::I64List, false, std::vector<std::int64_t>{1, 1}},
        {"pads", AttrType::I64List, false, std::vector<std::int64_t>{0, 0, 0, 0}}}},
      {OpKind::MaxPool,
       "MaxPool",
       1,
       1,
       true,
       {{"kernel_shape", AttrType::I64List, true},
        {"strides", AttrType::I64List, false, std::vector<std::int64_t>{1, 1}},
        {"pads", AttrType::I64List, false, std::vector<std::int64_t>{0, 0, 0, 0}}}},
      {OpKind::ReduceSum,
       "ReduceSum",
       1,
       1,
       false,
       {{"axes", AttrType::I64List, false, std::vector<std::int64_t>{}},
        {"keepdims", AttrType::I64, false, std::int64_t(1)}}},
      {OpKind::ReduceL1,
       "ReduceL1",
       1,
       1,
       false,
       {{"axes", AttrType::I64List, false, std::vector<std::int64_t>{}},
        {"keepdims", AttrType::I64, false, std::int64_t(1)}}},
      {OpKind::Reshape, "Reshape", 2, 1, false, {}},
      {OpKind::Identity, "Identity", 1, 1, false, {}},
      {OpKind::Constant, "Constant", 0, 1, false, {{"value", AttrType::Tensor, true}}},
  };
  return table;
}

inline const OpSpec &op_spec(OpKind kind) {
  for (const OpSpec &s : op_registry())
    if (s.kind == kind)
      return s;
  fail("UnsupportedOp", "op kind not in registry");
}

inline const OpSpec *find_op_spec(std::string_view name) {
  for (const OpSpec &s : op_registry())
    if (s.name == name)
      return &s;
  return nullptr;
}

inline std::string_view op_name(OpKind kind) { return op_spec(kind).name; }

//===----------------------------------------------------------------------===//
// Graph structures
//===----------------------------------------------------------------------===//

/// Values are identified by their index in the owning function's value table.
using ValueId = std::int32_t;

struct ValueInfo {
  TensorType type;
  /// Import-time name, kept for export and debugging. Printing uses
  /// positional names, so this never affects the textual form.
  std::string name;
};

struct GraphOp {
  OpKind kind;
  std::vector<ValueId> operands;
  std::vector<ValueId> results;
  AttrMap attributes;

  const AttributeValue *attr(const std::string &name) const {
    auto it = attributes.find(name);
    return it == attributes.end() ? nullptr : &it->second;
  }
  float f32_attr(const std::string &name) const { return std::get<float>(attributes.at(name)); }
  std::int64_t i64_attr(const std::string &name) const {
    return std::get<std::int64_t>(attributes.at(name));
  }
  const std::vector<std::int64_t> &ints_attr(const std::string &name) const {
    return std::get<std::vector<std::int64_t>>(attributes.at(name));
  }
  const TensorValue &tensor_attr(const std::string &name) const {
    return std::get<TensorValue>(attributes.at(name));
  }
};

/// A function is a topologically ordered op list over an SSA value table.
struct GraphFunction {
  std::string name;
  std::vector<ValueId> inputs;
  std::vector<GraphOp> ops;
  std::vector<ValueId> results;
  std::vector<ValueInfo> values;

  const TensorType &type_of(ValueId v) const { return values.at(static_cast<std::size_t>(v)).type; }
  TensorType &type_of(ValueId v) { return values.at(static_cast<std::size_t>(v)).type; }

  ValueId new_value(TensorType type, std::string value_name = "") {
    values.push_back(ValueInfo{std::move(type), std::move(value_name)});
    return static_cast<ValueId>(values.size() - 1);
  }

  /// Index of the op defining `v`, or -1 for function inputs / dead ids.
  int defining_op(ValueId v) const {
    for (std::size_t i = 0; i < ops.size(); ++i)
      for (ValueId r : ops[i].results)
        if (r == v)
          return static_cast<int>(i);
    return -1;
  }

  bool is_input(ValueId v) const {
    return std::find(inputs.begin(), inputs.end(), v) != inputs.end();
  }

  /// Number of uses of `v` across op operands and function results.
  int use_count(ValueId v) const {
    int n = 0;
    for (const GraphOp &op : ops)
      for (ValueId o : op.operands)
        if (o == v)
          ++n;
    for (ValueId r : results)
      if (r == v)
        ++n;
    return n;
  }

  /// True when `v` is produced by a Constant op; returns the op index via
  /// `out_op` if requested.
  bool is_constant(ValueId v, int *out_op = nullptr) const {
    int def = defining_op(v);
    if (def < 0 || ops[static_cast<std::size_t>(def)].kind != OpKind::Constant)
      return false;
    if (out_op)
      *out_op = def;
    return true;
  }

  const TensorValue *constant_payload(ValueId v) const {
    int def = -1;
    if (!is_constant(v, &def))
      return nullptr;
    return &ops[static_cast<std::size_t>(def)].tensor_attr("value");
  }
};

/// Names the inference function and its external input/output arity.
struct EntryPointDescriptor {
  std::string func;
  int num_inputs = 0;
  int num_outputs = 0;
};

struct GraphModule {
  std::vector<GraphFunction> functions;
  EntryPointDescriptor entry_point;

  const GraphFunction &main() const {
    for (const GraphFunction &f : functions)
      if (f.name == "main_graph")
        return f;
    fail("MissingMainGraph", "module has no main_graph function");
  }
  GraphFunction &main() {
    for (GraphFunction &f : functions)
      if (f.name == "main_graph")
        return f;
    fail("MissingMainGraph", "module has no main_graph function");
  }
};

//===----------------------------------------------------------------------===//
// Builder
//===----------------------------------------------------------------------===//

/// Convenience for constructing verified modules in code (importer, passes,
/// tests).
class GraphBuilder {
public:
  explicit GraphBuilder(std::string name = "main_graph") { fn_.name = std::move(name); }

  ValueId input(TensorType type, std::string value_name = "") {
    ValueId v = fn_.new_value(std::move(type), std::move(value_name));
    fn_.inputs.push_back(v);
    return v;
  }

  /// Appends an op; result types default to unranked tensors of the first
  /// operand's dtype (shape inference refines them later).
  ValueId op(OpKind kind, std::vector<ValueId> operands, AttrMap attributes = {},
             std::optional<TensorType> result_type = std::nullopt, std::string result_name = "") {
    const OpSpec &spec = op_spec(kind);
    materialize_defaults(spec, attributes);
    TensorType type;
    if (result_type) {
      type = *result_type;
    } else if (kind == OpKind::Constant) {
      type = std::get<TensorValue>(attributes.at("value")).type();
    } else {
      DType dt = operands.empty() ? DType::F32 : fn_.type_of(operands[0]).dtype;
      type = TensorType{dt, Shape::unranked()};
    }
    ValueId r = fn_.new_value(std::move(type), std::move(result_name));
    fn_.ops.push_back(GraphOp{kind, std::move(operands), {r}, std::move(attributes)});
    return r;
  }

  ValueId constant(TensorValue value, std::string result_name = "") {
    return op(OpKind::Constant, {}, {{"value", std::move(value)}}, std::nullopt,
              std::move(result_name));
  }

  void ret(std::vector<ValueId> results) { fn_.results = std::move(results); }

  /// Finishes the module; the entry point is synthesized from the signature.
  GraphModule finish() {
    GraphModule m;
    m.entry_point = EntryPointDescriptor{fn_.name, static_cast<int>(fn_.inputs.size()),
                                         static_cast<int>(fn_.results.size())};
    m.functions.push_back(std::move(fn_));
    return m;
  }

  GraphFunction &function() { return fn_; }

  static void materialize_defaults(const OpSpec &spec, AttrMap &attributes) {
    for (const AttrSpec &a : spec.attrs) {
      if (!a.required && !attributes.count(std::string(a.name)))
        attributes.emplace(std::string(a.name), a.default_value);
    }
  }

private:
  GraphFunction fn_;
};

//===----------------------------------------------------------------------===//
// Verifier
//===----------------------------------------------------------------------===//

namespace detail {

inline bool attr_type_matches(const AttributeValue &v, AttrType t) {
  switch (t) {
  case AttrType::F32:
    return std::holds_alternative<float>(v);
  case AttrType::I64:
    return std::holds_alternative<std::int64_t>(v);
  case AttrType::I64List:
    return std::holds_alternative<std::vector<std::int64_t>>(v);
  case AttrType::Tensor:
    return std::holds_alternative<TensorValue>(v);
  }
  return false;
}

inline void verify_function(const GraphFunction &fn, std::vector<Diagnostic> &diags) {
  std::vector<int> def_count(fn.values.size(), 0);
  std::vector<bool> defined(fn.values.size(), false);

  auto in_range = [&](ValueId v) { return v >= 0 && static_cast<std::size_t>(v) < fn.values.size(); };

  for (ValueId v : fn.inputs) {
    if (!in_range(v)) {
      diags.push_back({"InvalidValueRef", "function input id out of range", -1});
      continue;
    }
    ++def_count[static_cast<std::size_t>(v)];
    defined[static_cast<std::size_t>(v)] = true;
  }

  for (std::size_t i = 0; i < fn.ops.size(); ++i) {
    const GraphOp &op = fn.ops[i];
    const OpSpec &spec = op_spec(op.kind);
    int idx = static_cast<int>(i);

    if (static_cast<int>(op.operands.size()) != spec.num_operands)
      diags.push_back({"OperandCountMismatch",
                       std::string(spec.name) + " expects " + std::to_string(spec.num_operands) +
                           " operands, got " + std::to_string(op.operands.size()),
                       idx});
    if (static_cast<int>(op.results.size()) != spec.num_results)
      diags.push_back({"ResultCountMismatch",
                       std::string(spec.name) + " expects " + std::to_string(spec.num_results) +
                           " results, got " + std::to_string(op.results.size()),
                       idx});

    for (const auto &[name, value] : op.attributes) {
      const AttrSpec *found = nullptr;
      for (const AttrSpec &a : spec.attrs)
        if (a.name == name)
          found = &a;
      if (!found)
        diags.push_back({"UnknownAttribute",
                         std::string(spec.name) + " has no attribute '" + name + "'", idx});
      else if (!attr_type_matches(value, found->type))
        diags.push_back({"AttributeTypeMismatch",
                         "attribute '" + name + "' of " + std::string(spec.name) +
                             " has the wrong payload type",
                         idx});
    }
    for (const AttrSpec &a : spec.attrs)
      if (a.required && !op.attributes.count(std::string(a.name)))
        diags.push_back({"MissingAttribute",
                         std::string(spec.name) + " requires attribute '" + std::string(a.name) + "'",
                         idx});

    for (ValueId o : op.operands) {
      if (!in_range(o)) {
        diags.push_back({"InvalidValueRef", "operand id out of range", idx});
        continue;
      }
      if (!defined[static_cast<std::size_t>(o)])
        diags.push_back({"SSADominanceViolation",
                         "operand %" + std::to_string(o) + " of op #" + std::to_string(idx) +
                             " is not defined before use",
                         idx});
    }
    for (ValueId r : op.results) {
      if (!in_range(r)) {
        diags.push_back({"InvalidValueRef", "result id out of range", idx});
        continue;
      }
      ++def_count[static_cast<std::size_t>(r)];
      defined[static_cast<std::size_t>(r)] = true;
    }
  }

  for (std::size_t v = 0; v < fn.values.size(); ++v)
    if (def_count[v] > 1)
      diags.push_back({"MultipleDefinition",
                       "value %" + std::to_string(v) + " has " + std::to_string(def_count[v]) +
                           " defining sites",
                       -1});

  for (ValueId r : fn.results) {
    if (!in_range(r) || !defined[static_cast<std::size_t>(r)])
      diags.push_back({"SSADominanceViolation", "function result is never defined", -1});
  }
}

} // namespace detail

/// Checks every structural invariant; returns one diagnostic per violation.
inline std::vector<Diagnostic> verify(const GraphModule &module) {
  std::vector<Diagnostic> diags;

  int main_count = 0;
  for (const GraphFunction &fn : module.functions)
    if (fn.name == "main_graph")
      ++main_count;
  if (main_count != 1)
    diags.push_back({"MissingMainGraph",
                     "module must contain exactly one function named main_graph, found " +
                         std::to_string(main_count),
                     -1});

  const GraphFunction *entry_fn = nullptr;
  for (const GraphFunction &fn : module.functions)
    if (fn.name == module.entry_point.func)
      entry_fn = &fn;
  if (!entry_fn) {
    diags.push_back({"MissingEntryFunction",
                     "entry point names unknown function '" + module.entry_point.func + "'", -1});
  } else {
    if (module.entry_point.num_inputs != static_cast<int>(entry_fn->inputs.size()) ||
        module.entry_point.num_outputs != static_cast<int>(entry_fn->results.size()))
      diags.push_back({"EntryPointArityMismatch",
                       "entry point declares " + std::to_string(module.entry_point.num_inputs) +
                           "/" + std::to_string(module.entry_point.num_outputs) +
                           " inputs/outputs but " + entry_fn->name + " has " +
                           std::to_string(entry_fn->inputs.size()) + "/" +
                           std::to_string(entry_fn->results.size()),
                       -1});
    if (module.entry_point.num_inputs < 0 || module.entry_point.num_outputs < 1)
      diags.push_back({"InvalidEntryPointCounts",
                       "entry point needs num_inputs >= 0 and num_outputs >= 1", -1});
  }

  for (const GraphFunction &fn : module.functions)
    detail::verify_function(fn, diags);
  return diags;
}

/// Throws on the first verifier finding; used where a verified module is a
/// precondition.
inline void verify_or_throw(const GraphModule &module, const std::string &context) {
  std::vector<Diagnostic> diags = verify(module);
  if (!diags.empty())
    fail(diags.front().code, context + ": " + diags.front().str());
}

//===----------------------------------------------------------------------===//
// Structural equality
//===----------------------------------------------------------------------===//

namespace detail {

struct EquivState {
  const GraphFunction &a;
  const GraphFunction &b;
  std::map<ValueId, ValueId> fwd;
  std::map<ValueId, ValueId> bwd;

  bool values_equiv(ValueId x, ValueId y) {
    auto it = fwd.find(x);
    if (it != fwd.end())
      return it->second == y;
    auto jt = bwd.find(y);
    if (jt != bwd.end())
      return false; // y already matched to some other value
    if (a.type_of(x) != b.type_of(y))
      return false;

    auto ia = std::find(a.inputs.begin(), a.inputs.end(), x);
    auto ib = std::find(b.inputs.begin(), b.inputs.end(), y);
    bool x_is_input = ia != a.inputs.end();
    bool y_is_input = ib != b.inputs.end();
    if (x_is_input != y_is_input)
      return false;
    if (x_is_input) {
      if (ia - a.inputs.begin() != ib - b.inputs.begin())
        return false;
      fwd[x] = y;
      bwd[y] = x;
      return true;
    }

    int da = a.defining_op(x);
    int db = b.defining_op(y);
    if (da < 0 || db < 0)
      return false;
    const GraphOp &oa = a.ops[static_cast<std::size_t>(da)];
    const GraphOp &ob = b.ops[static_cast<std::size_t>(db)];
    if (oa.kind != ob.kind || oa.operands.size() != ob.operands.size() ||
        oa.results.size() != ob.results.size())
      return false;
    std::size_t rx = 0, ry = 0;
    while (rx < oa.results.size() && oa.results[rx] != x)
      ++rx;
    while (ry < ob.results.size() && ob.results[ry] != y)
      ++ry;
    if (rx != ry)
      return false;
    if (oa.attributes.size() != ob.attributes.size())
      return false;
    for (auto ita = oa.attributes.begin(), itb = ob.attributes.begin(); ita != oa.attributes.end();
         ++ita, ++itb)
      if (ita->first != itb->first || !attribute_equal(ita->second, itb->second))
        return false;

    // Commit the match before recursing; the graph is acyclic so a wrong
    // tentative match can only be reported, not revisited.
    fwd[x] = y;
    bwd[y] = x;
    for (std::size_t i = 0; i < oa.operands.size(); ++i)
      if (!values_equiv(oa.operands[i], ob.operands[i]))
        return false;
    return true;
  }
};

} // namespace detail

/// Dataflow-graph isomorphism from results back to inputs: value numbering
/// and the linear op order are ignored, everything reachable must match
/// one-to-one. Ops not reachable from the results do not participate.
inline bool structural_equal(const GraphModule &ma, const GraphModule &mb) {
  if (ma.functions.size() != mb.functions.size())
    return false;
  if (ma.entry_point.func != mb.entry_point.func ||
      ma.entry_point.num_inputs != mb.entry_point.num_inputs ||
      ma.entry_point.num_outputs != mb.entry_point.num_outputs)
    return false;
  for (std::size_t f = 0; f < ma.functions.size(); ++f) {
    const GraphFunction &a = ma.functions[f];
    const GraphFunction &b = mb.functions[f];
    if (a.name != b.name || a.inputs.size() != b.inputs.size() ||
        a.results.size() != b.results.size())
      return false;
    for (std::size_t i = 0; i < a.inputs.size(); ++i)
      if (a.type_of(a.inputs[i]) != b.type_of(b.inputs[i]))
        return false;
    detail::EquivState st{a, b, {}, {}};
    for (std::size_t i = 0; i < a.results.size(); ++i)
      if (!st.values_equiv(a.results[i], b.results[i]))
        return false;
  }
  return true;
}

} // namespace loom
