/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- affine_print.hpp ------------------------===//
//
// Textual form of affine programs. Non-trivial loop bounds hoist into named
// affine maps at the top of the module:
//
//   #map0 = affine_map<(d0) -> (d0)>
//   #map1 = affine_map<(d0) -> (d0 + 2)>
//   ...
//   affine.for %arg3 = #map0(%arg2) to #map1(%arg2) { ... }
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/affine_ir.hpp"
#include "loom/loop_print.hpp"

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace loom {

namespace detail {

class AffineMapTable {
public:
  /// Registers the exprs as one (possibly multi-result) map; returns its
  /// application text, e.g. "#map1(%arg2)". Structurally identical maps
  /// share a name.
  std::string apply(const std::vector<AffineExpr> &exprs,
                    const std::function<std::string(std::int32_t)> &iv_name) {
    std::set<std::int32_t> vars;
    for (const AffineExpr &e : exprs)
      e.visit_vars([&](std::int32_t v) { vars.insert(v); });
    std::vector<std::int32_t> operands(vars.begin(), vars.end());

    std::map<std::int32_t, std::string> dims;
    for (std::size_t i = 0; i < operands.size(); ++i)
      dims[operands[i]] = "d" + std::to_string(i);

    std::ostringstream def;
    def << "(";
    for (std::size_t i = 0; i < operands.size(); ++i)
      def << (i ? ", " : "") << "d" << i;
    def << ") -> (";
    for (std::size_t i = 0; i < exprs.size(); ++i)
      def << (i ? ", " : "") << exprs[i].str([&](std::int32_t v) { return dims.at(v); });
    def << ")";

    std::string key = def.str();
    auto it = names_.find(key);
    if (it == names_.end())
      it = names_.emplace(key, "#map" + std::to_string(names_.size())).first;

    std::ostringstream use;
    use << it->second << "(";
    for (std::size_t i = 0; i < operands.size(); ++i)
      use << (i ? ", " : "") << iv_name(operands[i]);
    use << ")";
    return use.str();
  }

  /// Definitions in #map0, #map1, ... order.
  std::string definitions() const {
    std::vector<std::pair<std::string, std::string>> ordered(names_.begin(), names_.end());
    std::sort(ordered.begin(), ordered.end(),
              [](const auto &a, const auto &b) { return a.second.size() < b.second.size() ||
                                                        (a.second.size() == b.second.size() &&
                                                         a.second < b.second); });
    std::ostringstream os;
    for (const auto &[body, name] : ordered)
      os << name << " = affine_map<" << body << ">\n";
    return os.str();
  }

private:
  std::map<std::string, std::string> names_;
};

} // namespace detail

/// Deterministic rendering of an affine program; maps hoisted to the top.
inline std::string emit_affine_text(const AffineProgram &program) {
  std::ostringstream body_os;
  detail::AffineMapTable maps;

  int value_counter = 0;
  int arg_counter = 0;

  std::ostringstream fn_os;
  detail::print_function_header(fn_os, program.name, program.buffers, program.results, arg_counter);

  std::map<std::int32_t, std::string> buffer_names;
  detail::print_buffer_decls(fn_os, program.buffers, buffer_names, value_counter, arg_counter);

  std::map<std::int32_t, std::string> iv_names;
  auto iv_name = [&](std::int32_t v) { return iv_names.at(v); };

  for (const AffineNest &nest : program.nests) {
    std::string indent = "    ";
    for (const AffineFor &loop : nest.loops) {
      iv_names[loop.iv] = "%arg" + std::to_string(arg_counter++);
      fn_os << indent << "affine.for " << iv_names.at(loop.iv) << " = ";
      if (loop.lower.is_constant())
        fn_os << loop.lower.constant;
      else
        fn_os << maps.apply({loop.lower}, iv_name);
      fn_os << " to ";
      if (loop.upper.size() == 1 && loop.upper[0].is_constant())
        fn_os << loop.upper[0].constant;
      else if (loop.upper.size() == 1)
        fn_os << maps.apply(loop.upper, iv_name);
      else
        fn_os << "min " << maps.apply(loop.upper, iv_name);
      if (loop.step != 1)
        fn_os << " step " << loop.step;
      fn_os << " {\n";
      indent += "  ";
    }

    detail::BodyPrinter printer{
        fn_os,
        program.buffers,
        [&](std::int32_t b) { return buffer_names.at(b); },
        iv_name,
        value_counter,
        indent};
    printer.print(nest.body);

    for (std::size_t i = nest.loops.size(); i-- > 0;) {
      indent.resize(indent.size() - 2);
      fn_os << indent << "}\n";
    }
  }

  detail::print_return(fn_os, program.results, program.buffers, buffer_names);
  fn_os << "  }\n";
  fn_os << "  " << print_entry_point(program.entry_point, "krnl.entry_point") << "\n";
  fn_os << "}\n";

  body_os << maps.definitions();
  body_os << "module {\n" << fn_os.str();
  return body_os.str();
}

} // namespace loom
