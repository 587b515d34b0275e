/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===------------------------------ plan.hpp -----------------------------===//
//
// Serialized affine programs (*.plan): a JSON image of the whole program,
// buffers and constants included, so a compiled model can be executed later
// without recompiling.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/affine_ir.hpp"
#include "loom/import.hpp"

#include <fstream>
#include <string>

namespace loom {

namespace detail {

inline Json expr_to_json(const AffineExpr &e) {
  Json j;
  j["c"] = e.constant;
  Json terms = Json::array();
  for (const auto &[v, coeff] : e.terms)
    terms.push_back(Json::array({v, coeff}));
  j["t"] = std::move(terms);
  return j;
}

inline AffineExpr expr_from_json(const Json &j) {
  AffineExpr e;
  e.constant = j.at("c").get<std::int64_t>();
  for (const Json &t : j.at("t"))
    e.terms.emplace_back(t.at(0).get<std::int32_t>(), t.at(1).get<std::int64_t>());
  return e;
}

inline const char *scalar_kind_name(ScalarKind k) {
  switch (k) {
  case ScalarKind::Load:
    return "load";
  case ScalarKind::Store:
    return "store";
  case ScalarKind::ConstF:
    return "constf";
  case ScalarKind::ConstI:
    return "consti";
  case ScalarKind::Add:
    return "add";
  case ScalarKind::Sub:
    return "sub";
  case ScalarKind::Mul:
    return "mul";
  case ScalarKind::Div:
    return "div";
  case ScalarKind::Max:
    return "max";
  case ScalarKind::Abs:
    return "abs";
  case ScalarKind::Exp:
    return "exp";
  case ScalarKind::CmpGe:
    return "cmp_ge";
  case ScalarKind::Select:
    return "select";
  }
  return "?";
}

inline ScalarKind scalar_kind_from_name(const std::string &name) {
  static const std::map<std::string, ScalarKind> table = {
      {"load", ScalarKind::Load},   {"store", ScalarKind::Store},
      {"constf", ScalarKind::ConstF}, {"consti", ScalarKind::ConstI},
      {"add", ScalarKind::Add},     {"sub", ScalarKind::Sub},
      {"mul", ScalarKind::Mul},     {"div", ScalarKind::Div},
      {"max", ScalarKind::Max},     {"abs", ScalarKind::Abs},
      {"exp", ScalarKind::Exp},     {"cmp_ge", ScalarKind::CmpGe},
      {"select", ScalarKind::Select}};
  auto it = table.find(name);
  if (it == table.end())
    fail("ParseError", "unknown scalar op '" + name + "' in plan");
  return it->second;
}

} // namespace detail

inline Json plan_to_json(const AffineProgram &program) {
  Json root;
  root["format"] = "loom-plan";
  root["version"] = 1;
  root["name"] = program.name;
  root["entry"] = Json{{"func", program.entry_point.func},
                       {"num_inputs", program.entry_point.num_inputs},
                       {"num_outputs", program.entry_point.num_outputs}};
  root["num_ivs"] = program.num_ivs;

  Json buffers = Json::array();
  for (const BufferDecl &b : program.buffers) {
    Json jb;
    jb["name"] = b.name;
    jb["elem_type"] = dtype_code(b.type.dtype);
    Json dims = Json::array();
    for (const DimSize &d : b.type.shape.dims())
      dims.push_back(*d);
    jb["dims"] = std::move(dims);
    jb["input"] = b.is_input;
    if (b.init)
      jb["init"] = detail::tensor_to_json(*b.init)["data"];
    buffers.push_back(std::move(jb));
  }
  root["buffers"] = std::move(buffers);
  root["results"] = program.results;

  Json nests = Json::array();
  for (const AffineNest &nest : program.nests) {
    Json jn;
    jn["tag"] = nest.tag;
    Json loops = Json::array();
    for (const AffineFor &loop : nest.loops) {
      Json jl;
      jl["iv"] = loop.iv;
      jl["lower"] = detail::expr_to_json(loop.lower);
      Json uppers = Json::array();
      for (const AffineExpr &u : loop.upper)
        uppers.push_back(detail::expr_to_json(u));
      jl["upper"] = std::move(uppers);
      jl["step"] = loop.step;
      loops.push_back(std::move(jl));
    }
    jn["loops"] = std::move(loops);
    Json body = Json::array();
    for (const ScalarOp &op : nest.body) {
      Json jo;
      jo["k"] = detail::scalar_kind_name(op.kind);
      jo["dt"] = dtype_code(op.dtype);
      if (op.buffer >= 0)
        jo["buf"] = op.buffer;
      if (!op.indices.empty()) {
        Json idx = Json::array();
        for (const AffineExpr &e : op.indices)
          idx.push_back(detail::expr_to_json(e));
        jo["idx"] = std::move(idx);
      }
      if (!op.args.empty()) {
        Json args = Json::array();
        for (const ScalarOperand &a : op.args) {
          if (a.tag == ScalarOperand::Value)
            args.push_back(Json{{"v", a.value}});
          else
            args.push_back(Json{{"e", detail::expr_to_json(a.expr)}});
        }
        jo["args"] = std::move(args);
      }
      if (op.kind == ScalarKind::ConstF)
        jo["f"] = static_cast<double>(op.fval);
      if (op.kind == ScalarKind::ConstI)
        jo["i"] = op.ival;
      body.push_back(std::move(jo));
    }
    jn["body"] = std::move(body);
    nests.push_back(std::move(jn));
  }
  root["nests"] = std::move(nests);
  return root;
}

inline AffineProgram plan_from_json(const Json &root) {
  if (root.value("format", "") != "loom-plan")
    fail("ParseError", "not a loom plan file");
  AffineProgram program;
  program.name = root.at("name").get<std::string>();
  program.entry_point.func = root.at("entry").at("func").get<std::string>();
  program.entry_point.num_inputs = root.at("entry").at("num_inputs").get<int>();
  program.entry_point.num_outputs = root.at("entry").at("num_outputs").get<int>();
  program.num_ivs = root.at("num_ivs").get<std::int32_t>();

  for (const Json &jb : root.at("buffers")) {
    BufferDecl b;
    b.name = jb.at("name").get<std::string>();
    std::vector<DimSize> dims;
    for (const Json &d : jb.at("dims"))
      dims.push_back(DimSize(d.get<std::int64_t>()));
    b.type = TensorType{dtype_from_code(jb.at("elem_type").get<int>()), Shape(std::move(dims))};
    b.is_input = jb.at("input").get<bool>();
    if (jb.contains("init")) {
      Json t;
      t["elem_type"] = dtype_code(b.type.dtype);
      Json jdims = Json::array();
      for (const DimSize &d : b.type.shape.dims())
        jdims.push_back(*d);
      t["dims"] = std::move(jdims);
      t["data"] = jb.at("init");
      b.init = detail::tensor_from_json(t);
    }
    program.buffers.push_back(std::move(b));
  }
  program.results = root.at("results").get<std::vector<std::int32_t>>();

  for (const Json &jn : root.at("nests")) {
    AffineNest nest;
    nest.tag = jn.value("tag", "");
    for (const Json &jl : jn.at("loops")) {
      AffineFor loop;
      loop.iv = jl.at("iv").get<std::int32_t>();
      loop.lower = detail::expr_from_json(jl.at("lower"));
      for (const Json &u : jl.at("upper"))
        loop.upper.push_back(detail::expr_from_json(u));
      loop.step = jl.at("step").get<std::int64_t>();
      nest.loops.push_back(std::move(loop));
    }
    for (const Json &jo : jn.at("body")) {
      ScalarOp op;
      op.kind = detail::scalar_kind_from_name(jo.at("k").get<std::string>());
      op.dtype = dtype_from_code(jo.at("dt").get<int>());
      op.buffer = jo.value("buf", -1);
      if (jo.contains("idx"))
        for (const Json &e : jo.at("idx"))
          op.indices.push_back(detail::expr_from_json(e));
      if (jo.contains("args"))
        for (const Json &a : jo.at("args")) {
          if (a.contains("v"))
            op.args.push_back(ScalarOperand::val(a.at("v").get<std::int32_t>()));
          else
            op.args.push_back(ScalarOperand::of(detail::expr_from_json(a.at("e"))));
        }
      if (jo.contains("f"))
        op.fval = jo.at("f").get<float>();
      if (jo.contains("i"))
        op.ival = jo.at("i").get<std::int64_t>();
      nest.body.push_back(std::move(op));
    }
    program.nests.push_back(std::move(nest));
  }
  return program;
}

inline std::string plan_text(const AffineProgram &program) {
  return plan_to_json(program).dump(2) + "\n";
}

inline AffineProgram read_plan(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is)
    fail("IoError", "cannot open " + path.string());
  try {
    return plan_from_json(Json::parse(is));
  } catch (const nlohmann::json::exception &e) {
    fail("ParseError", path.string() + ": " + e.what());
  }
}

} // namespace loom
