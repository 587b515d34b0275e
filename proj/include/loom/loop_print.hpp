/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- loop_print.hpp --------------------------===//
//
// Textual form of the loop level: define_loops / block / skew lines followed
// by krnl.iterate(scheduled) with (originals) { body }.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph_print.hpp"
#include "loom/loop_ir.hpp"

#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace loom {

namespace detail {

/// Shared scalar-body renderer for the loop and affine printers.
struct BodyPrinter {
  std::ostream &os;
  const std::vector<BufferDecl> &buffers;
  std::function<std::string(std::int32_t)> buffer_name;
  std::function<std::string(std::int32_t)> iv_name;
  int &value_counter;
  std::string indent;

  std::string expr_str(const AffineExpr &e) const {
    return e.str([&](std::int32_t v) { return iv_name(v); });
  }

  std::string operand_str(const std::vector<std::string> &names, const ScalarOperand &a) const {
    if (a.tag == ScalarOperand::Expr)
      return "affine(" + expr_str(a.expr) + ")";
    return names[static_cast<std::size_t>(a.value)];
  }

  std::string index_list(const ScalarOp &op) const {
    std::vector<std::string> parts;
    for (const AffineExpr &e : op.indices)
      parts.push_back(expr_str(e));
    return join(parts, ", ");
  }

  void print(const std::vector<ScalarOp> &body) {
    std::vector<std::string> names(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
      const ScalarOp &op = body[i];
      const char *suffix = op.dtype == DType::F32 ? "f" : "i";
      const char *ty = dtype_name(op.dtype);
      auto def = [&]() -> std::string {
        names[i] = "%" + std::to_string(value_counter++);
        return names[i];
      };
      const std::string &memref =
          op.buffer >= 0 ? buffers[static_cast<std::size_t>(op.buffer)].type.str("memref") : "";
      switch (op.kind) {
      case ScalarKind::Load:
        os << indent << def() << " = affine.load " << buffer_name(op.buffer) << "["
           << index_list(op) << "] : " << memref << "\n";
        break;
      case ScalarKind::Store:
        os << indent << "affine.store " << operand_str(names, op.args[0]) << ", "
           << buffer_name(op.buffer) << "[" << index_list(op) << "] : " << memref << "\n";
        break;
      case ScalarKind::ConstF:
        os << indent << def() << " = constant " << format_float(op.fval) << " : f32\n";
        break;
      case ScalarKind::ConstI:
        os << indent << def() << " = constant " << op.ival << " : i64\n";
        break;
      case ScalarKind::Add:
      case ScalarKind::Sub:
      case ScalarKind::Mul:
      case ScalarKind::Div:
      case ScalarKind::Max: {
        const char *base = op.kind == ScalarKind::Add   ? "add"
                           : op.kind == ScalarKind::Sub ? "sub"
                           : op.kind == ScalarKind::Mul ? "mul"
                           : op.kind == ScalarKind::Div ? "div"
                                                        : "max";
        os << indent << def() << " = " << base << suffix << " " << operand_str(names, op.args[0])
           << ", " << operand_str(names, op.args[1]) << " : " << ty << "\n";
        break;
      }
      case ScalarKind::Abs:
        os << indent << def() << " = abs" << suffix << " " << operand_str(names, op.args[0])
           << " : " << ty << "\n";
        break;
      case ScalarKind::Exp:
        os << indent << def() << " = exp " << operand_str(names, op.args[0]) << " : f32\n";
        break;
      case ScalarKind::CmpGe:
        if (op.dtype == DType::F32)
          os << indent << def() << " = cmpf oge, " << operand_str(names, op.args[0]) << ", "
             << operand_str(names, op.args[1]) << " : f32\n";
        else
          os << indent << def() << " = cmpi sge, " << operand_str(names, op.args[0]) << ", "
             << operand_str(names, op.args[1]) << " : i64\n";
        break;
      case ScalarKind::Select:
        os << indent << def() << " = select " << operand_str(names, op.args[0]) << ", "
           << operand_str(names, op.args[1]) << ", " << operand_str(names, op.args[2]) << " : "
           << ty << "\n";
        break;
      }
    }
  }
};

/// Prints alloc / krnl.global declarations for non-input buffers and fills
/// in their printed names.
inline void print_buffer_decls(std::ostream &os, const std::vector<BufferDecl> &buffers,
                               std::map<std::int32_t, std::string> &names, int &value_counter,
                               int &arg_counter) {
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    const BufferDecl &b = buffers[i];
    if (b.is_input) {
      names[static_cast<std::int32_t>(i)] = "%arg" + std::to_string(arg_counter++);
      continue;
    }
    std::string name = "%" + std::to_string(value_counter++);
    names[static_cast<std::int32_t>(i)] = name;
    if (b.init) {
      os << "    " << name << " = \"krnl.global\"() {name = \"" << b.name
         << "\", value = " << print_dense(*b.init) << "} : () -> " << b.type.str("memref") << "\n";
    } else {
      os << "    " << name << " = alloc() : " << b.type.str("memref") << "\n";
    }
  }
}

inline void print_function_header(std::ostream &os, const std::string &name,
                                  const std::vector<BufferDecl> &buffers,
                                  const std::vector<std::int32_t> &results, int &arg_counter) {
  os << "  func @" << name << "(";
  bool first = true;
  int arg = arg_counter;
  for (const BufferDecl &b : buffers) {
    if (!b.is_input)
      continue;
    if (!first)
      os << ", ";
    first = false;
    os << "%arg" << arg++ << ": " << b.type.str("memref");
  }
  os << ")";
  if (!results.empty()) {
    os << " -> ";
    if (results.size() > 1)
      os << "(";
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (i)
        os << ", ";
      os << buffers[static_cast<std::size_t>(results[i])].type.str("memref");
    }
    if (results.size() > 1)
      os << ")";
  }
  os << " {\n";
}

inline void print_return(std::ostream &os, const std::vector<std::int32_t> &results,
                         const std::vector<BufferDecl> &buffers,
                         const std::map<std::int32_t, std::string> &names) {
  os << "    std.return";
  for (std::size_t i = 0; i < results.size(); ++i)
    os << (i ? ", " : " ") << names.at(results[i]);
  if (!results.empty()) {
    os << " : ";
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (i)
        os << ", ";
      os << buffers[static_cast<std::size_t>(results[i])].type.str("memref");
    }
  }
  os << "\n";
}

} // namespace detail

/// Renders a loop module in Listing-style form:
///   %1:3 = krnl.define_loops 3
///   krnl.iterate(%1#0, %1#1, %1#2) with (%1#0 -> %arg2 = 0 to 3, ...) { ... }
inline std::string print_loop_module(const LoopModule &m) {
  const LoopFunction &fn = m.fn;
  std::ostringstream os;
  os << "module {\n";

  int value_counter = 0;
  int arg_counter = 0;
  detail::print_function_header(os, fn.name, fn.buffers, fn.results, arg_counter);

  std::map<std::int32_t, std::string> buffer_names;
  detail::print_buffer_decls(os, fn.buffers, buffer_names, value_counter, arg_counter);

  std::map<LoopId, std::string> loop_names;
  std::map<LoopId, std::string> iv_names;

  for (const IterateOp &it : fn.iterates) {
    // define_loops for this iterate's originals
    std::string group = "%" + std::to_string(value_counter++);
    os << "    " << group << ":" << it.originals.size() << " = krnl.define_loops "
       << it.originals.size() << "\n";
    for (std::size_t i = 0; i < it.originals.size(); ++i)
      loop_names[it.originals[i]] = group + "#" + std::to_string(i);

    // schedule construction lines, in handle creation order
    std::vector<LoopId> derived;
    for (LoopId o : it.originals) {
      std::vector<LoopId> leaves_and_inner;
      // walk the whole derivation tree under o
      std::vector<LoopId> stack{o};
      while (!stack.empty()) {
        LoopId h = stack.back();
        stack.pop_back();
        for (LoopId c : fn.derived_children(h)) {
          derived.push_back(c);
          stack.push_back(c);
        }
      }
      (void)leaves_and_inner;
    }
    std::sort(derived.begin(), derived.end());
    for (std::size_t i = 0; i < derived.size(); ++i) {
      LoopId h = derived[i];
      if (const auto *outer = std::get_if<BlockOuterLoop>(&fn.loop(h).origin)) {
        // block creates outer then inner back to back
        std::string name = "%" + std::to_string(value_counter++);
        loop_names[h] = name + "#0";
        loop_names[derived[i + 1]] = name + "#1";
        os << "    " << name << ":2 = krnl.block " << loop_names.at(outer->parent) << ", "
           << outer->tile << " : (!krnl.loop) -> (!krnl.loop, !krnl.loop)\n";
        ++i;
      } else if (const auto *skewed = std::get_if<SkewedLoop>(&fn.loop(h).origin)) {
        std::string name = "%" + std::to_string(value_counter++);
        loop_names[h] = name;
        os << "    " << name << " = krnl.skew " << loop_names.at(skewed->parent) << " along "
           << loop_names.at(skewed->along) << ", " << skewed->factor << "\n";
      }
    }

    os << "    krnl.iterate(";
    for (std::size_t i = 0; i < it.scheduled.size(); ++i)
      os << (i ? ", " : "") << loop_names.at(it.scheduled[i]);
    os << ") with (";
    for (std::size_t i = 0; i < it.originals.size(); ++i) {
      LoopId o = it.originals[i];
      iv_names[o] = "%arg" + std::to_string(arg_counter++);
      const OriginalLoop &orig = fn.loop(o).original();
      os << (i ? ", " : "") << loop_names.at(o) << " -> " << iv_names.at(o) << " = " << orig.lb
         << " to " << orig.ub;
    }
    os << ") {\n";

    detail::BodyPrinter printer{
        os,
        fn.buffers,
        [&](std::int32_t b) { return buffer_names.at(b); },
        [&](std::int32_t v) { return iv_names.at(v); },
        value_counter,
        "      "};
    printer.print(it.body);
    os << "    }\n";
  }

  detail::print_return(os, fn.results, fn.buffers, buffer_names);
  os << "  }\n";
  os << "  " << print_entry_point(m.entry_point, "krnl.entry_point") << "\n";
  os << "}\n";
  return os.str();
}

} // namespace loom
