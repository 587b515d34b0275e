/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- graph_print.hpp -------------------------===//
//
// Deterministic textual form of graph modules. Values are numbered in
// definition order (%arg0... for inputs, %0... for op results), so the same
// module always prints to the same bytes.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"

#include <map>
#include <sstream>
#include <string>

namespace loom {

namespace detail {

inline void print_dense_rec(std::ostream &os, const TensorValue &v, int dim, std::int64_t &flat) {
  if (dim == v.shape().rank()) {
    if (v.dtype() == DType::F32)
      os << format_float(v.f32_data()[static_cast<std::size_t>(flat)]);
    else
      os << v.i64_data()[static_cast<std::size_t>(flat)];
    ++flat;
    return;
  }
  os << "[";
  for (std::int64_t i = 0; i < *v.shape().dim(dim); ++i) {
    if (i)
      os << ", ";
    print_dense_rec(os, v, dim + 1, flat);
  }
  os << "]";
}

inline std::string print_dense(const TensorValue &v) {
  std::ostringstream os;
  os << "dense<";
  std::int64_t flat = 0;
  print_dense_rec(os, v, 0, flat);
  os << "> : " << v.type().str();
  return os.str();
}

inline std::string print_attribute(const AttributeValue &attr) {
  if (const float *f = std::get_if<float>(&attr))
    return format_float(*f);
  if (const std::int64_t *i = std::get_if<std::int64_t>(&attr))
    return std::to_string(*i);
  if (const auto *list = std::get_if<std::vector<std::int64_t>>(&attr)) {
    std::ostringstream os;
    os << "[" << join(*list, ", ") << "]";
    return os.str();
  }
  return print_dense(std::get<TensorValue>(attr));
}

inline std::string print_attr_dict(const AttrMap &attrs) {
  if (attrs.empty())
    return "";
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (const auto &[name, value] : attrs) { // std::map: sorted, deterministic
    if (!first)
      os << ", ";
    first = false;
    os << name << " = " << print_attribute(value);
  }
  os << "}";
  return os.str();
}

} // namespace detail

inline std::string print_entry_point(const EntryPointDescriptor &ep, const char *dialect) {
  std::ostringstream os;
  os << "\"" << dialect << "\"() {func = @" << ep.func << ", numInputs = " << ep.num_inputs
     << " : i32, numOutputs = " << ep.num_outputs << " : i32} : () -> ()";
  return os.str();
}

/// Renders a verified module. One op per line:
///   %N = "onnx.Kind"(operands) {attrs} : (operand types) -> result type
inline std::string print_graph(const GraphModule &module) {
  std::ostringstream os;
  os << "module {\n";
  for (const GraphFunction &fn : module.functions) {
    std::map<ValueId, std::string> names;
    for (std::size_t i = 0; i < fn.inputs.size(); ++i)
      names[fn.inputs[i]] = "%arg" + std::to_string(i);
    int next = 0;
    for (const GraphOp &op : fn.ops)
      for (ValueId r : op.results)
        names[r] = "%" + std::to_string(next++);

    os << "  func @" << fn.name << "(";
    for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
      if (i)
        os << ", ";
      os << names[fn.inputs[i]] << ": " << fn.type_of(fn.inputs[i]).str();
    }
    os << ")";
    if (!fn.results.empty()) {
      os << " -> ";
      if (fn.results.size() > 1)
        os << "(";
      for (std::size_t i = 0; i < fn.results.size(); ++i) {
        if (i)
          os << ", ";
        os << fn.type_of(fn.results[i]).str();
      }
      if (fn.results.size() > 1)
        os << ")";
    }
    os << " {\n";

    for (const GraphOp &op : fn.ops) {
      os << "    ";
      for (std::size_t i = 0; i < op.results.size(); ++i) {
        if (i)
          os << ", ";
        os << names[op.results[i]];
      }
      os << " = \"onnx." << op_name(op.kind) << "\"(";
      for (std::size_t i = 0; i < op.operands.size(); ++i) {
        if (i)
          os << ", ";
        os << names[op.operands[i]];
      }
      os << ")";
      std::string attrs = detail::print_attr_dict(op.attributes);
      if (!attrs.empty())
        os << " " << attrs;
      os << " : (";
      for (std::size_t i = 0; i < op.operands.size(); ++i) {
        if (i)
          os << ", ";
        os << fn.type_of(op.operands[i]).str();
      }
      os << ") -> ";
      for (std::size_t i = 0; i < op.results.size(); ++i) {
        if (i)
          os << ", ";
        os << fn.type_of(op.results[i]).str();
      }
      os << "\n";
    }

    os << "    std.return";
    for (std::size_t i = 0; i < fn.results.size(); ++i)
      os << (i ? ", " : " ") << names[fn.results[i]];
    if (!fn.results.empty()) {
      os << " : ";
      for (std::size_t i = 0; i < fn.results.size(); ++i) {
        if (i)
          os << ", ";
        os << fn.type_of(fn.results[i]).str();
      }
    }
    os << "\n  }\n";
  }
  os << "  " << print_entry_point(module.entry_point, "onnx.EntryPoint") << "\n";
  os << "}\n";
  return os.str();
}

} // namespace loom
