/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===----------------------------- import.hpp ----------------------------===//
//
// Model import and export. The on-disk model is a JSON manifest (model.json)
// whose field structure mirrors the ONNX ModelProto one-to-one (op_type,
// elem_type, dims, ...) plus binary tensor payload files for initializers
// that are too large to inline.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"
#include "loom/payload.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace loom {

using Json = nlohmann::ordered_json;

/// Initializers with at most this many elements are inlined in the manifest
/// as plain number arrays; larger ones go to <name>.tensor payload files.
inline constexpr std::int64_t kInlineElementLimit = 64;

namespace detail {

inline TensorType type_from_json(const Json &j) {
  if (!j.contains("elem_type"))
    fail("ParseError", "value type is missing elem_type");
  TensorType type;
  type.dtype = dtype_from_code(j.at("elem_type").get<int>());
  if (!j.contains("dims")) {
    type.shape = Shape::unranked();
    return type;
  }
  std::vector<DimSize> dims;
  for (const Json &d : j.at("dims")) {
    if (d.is_null())
      dims.push_back(std::nullopt);
    else
      dims.push_back(DimSize(d.get<std::int64_t>()));
  }
  type.shape = Shape(std::move(dims));
  return type;
}

inline Json type_to_json(const TensorType &type) {
  Json j;
  j["elem_type"] = dtype_code(type.dtype);
  if (type.shape.ranked()) {
    Json dims = Json::array();
    for (const DimSize &d : type.shape.dims()) {
      if (d)
        dims.push_back(*d);
      else
        dims.push_back(nullptr);
    }
    j["dims"] = std::move(dims);
  }
  return j;
}

inline TensorValue tensor_from_json(const Json &j) {
  TensorType type = type_from_json(j);
  if (!type.shape.is_static())
    fail("ParseError", "tensor literal requires fully known dims");
  if (!j.contains("data"))
    fail("ParseError", "tensor literal is missing data");
  const Json &data = j.at("data");
  if (static_cast<std::int64_t>(data.size()) != type.shape.elem_count())
    fail("PayloadSizeMismatch", "tensor literal has " + std::to_string(data.size()) +
                                    " elements, dims imply " +
                                    std::to_string(type.shape.elem_count()));
  if (type.dtype == DType::F32) {
    std::vector<float> values;
    values.reserve(data.size());
    for (const Json &v : data)
      values.push_back(v.get<float>());
    return TensorValue::f32(type.shape, std::move(values));
  }
  std::vector<std::int64_t> values;
  values.reserve(data.size());
  for (const Json &v : data)
    values.push_back(v.get<std::int64_t>());
  return TensorValue::i64(type.shape, std::move(values));
}

inline Json tensor_to_json(const TensorValue &v) {
  Json j;
  j["elem_type"] = dtype_code(v.dtype());
  Json dims = Json::array();
  for (const DimSize &d : v.shape().dims())
    dims.push_back(*d);
  j["dims"] = std::move(dims);
  Json data = Json::array();
  if (v.dtype() == DType::F32) {
    for (float x : v.f32_data())
      data.push_back(static_cast<double>(x)); // float-to-double is exact
  } else {
    for (std::int64_t x : v.i64_data())
      data.push_back(x);
  }
  j["data"] = std::move(data);
  return j;
}

inline AttributeValue attribute_from_json(const Json &j) {
  std::string type = j.value("type", "");
  if (type == "FLOAT")
    return AttributeValue(j.at("f").get<float>());
  if (type == "INT")
    return AttributeValue(j.at("i").get<std::int64_t>());
  if (type == "INTS")
    return AttributeValue(j.at("ints").get<std::vector<std::int64_t>>());
  if (type == "TENSOR")
    return AttributeValue(tensor_from_json(j.at("t")));
  fail("ParseError", "attribute '" + j.value("name", "?") + "' has unsupported type '" + type + "'");
}

inline Json attribute_to_json(const std::string &name, const AttributeValue &attr) {
  Json j;
  j["name"] = name;
  if (const float *f = std::get_if<float>(&attr)) {
    j["type"] = "FLOAT";
    j["f"] = static_cast<double>(*f);
  } else if (const std::int64_t *i = std::get_if<std::int64_t>(&attr)) {
    j["type"] = "INT";
    j["i"] = *i;
  } else if (const auto *ints = std::get_if<std::vector<std::int64_t>>(&attr)) {
    j["type"] = "INTS";
    j["ints"] = *ints;
  } else {
    j["type"] = "TENSOR";
    j["t"] = tensor_to_json(std::get<TensorValue>(attr));
  }
  return j;
}

/// transA/transB on Gemm are recognized but only in their trivial form.
inline bool is_rejected_gemm_transpose(const OpSpec &spec, const std::string &name,
                                       const AttributeValue &value) {
  if (spec.kind != OpKind::Gemm || (name != "transA" && name != "transB"))
    return false;
  const std::int64_t *i = std::get_if<std::int64_t>(&value);
  if (i && *i == 0)
    return true; // trivially absent, drop it
  fail("UnsupportedAttribute", "Gemm with " + name + " != 0 is not supported");
}

} // namespace detail

/// Reads a manifest (and payload files next to it) into a verified module.
/// Initializers become Constant ops; names listed both as graph inputs and
/// initializers are treated as initializers only.
inline GraphModule import_model(const std::filesystem::path &manifest_path,
                                std::filesystem::path payload_dir = {}) {
  if (payload_dir.empty())
    payload_dir = manifest_path.parent_path();

  std::ifstream is(manifest_path);
  if (!is)
    fail("IoError", "cannot open " + manifest_path.string());
  Json root;
  try {
    root = Json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    fail("ParseError", manifest_path.string() + ": " + e.what());
  }

  try {
    const Json &graph = root.at("graph");
    GraphBuilder builder;
    std::map<std::string, ValueId> values;

    std::set<std::string> initializer_names;
    for (const Json &init : graph.value("initializers", Json::array()))
      initializer_names.insert(init.at("name").get<std::string>());

    for (const Json &input : graph.value("inputs", Json::array())) {
      std::string name = input.at("name").get<std::string>();
      if (initializer_names.count(name))
        continue; // initializer default; not an entry input
      if (values.count(name))
        fail("ParseError", "duplicate graph input '" + name + "'");
      values[name] = builder.input(detail::type_from_json(input.at("type")), name);
    }

    for (const Json &init : graph.value("initializers", Json::array())) {
      std::string name = init.at("name").get<std::string>();
      if (values.count(name))
        fail("ParseError", "duplicate initializer '" + name + "'");
      TensorValue value;
      if (init.contains("data")) {
        value = detail::tensor_from_json(init);
      } else {
        value = read_tensor_file(payload_dir / (name + ".tensor"));
        TensorType declared = detail::type_from_json(init);
        if (declared != value.type())
          fail("PayloadSizeMismatch", "initializer '" + name + "' declared as " + declared.str() +
                                          " but payload holds " + value.type().str());
      }
      values[name] = builder.constant(std::move(value), name);
    }

    for (const Json &node : graph.value("nodes", Json::array())) {
      std::string op_type = node.at("op_type").get<std::string>();
      const OpSpec *spec = find_op_spec(op_type);
      if (!spec)
        fail("UnsupportedOp", "operator '" + op_type + "' is not supported");

      AttrMap attrs;
      for (const Json &attr : node.value("attributes", Json::array())) {
        std::string name = attr.at("name").get<std::string>();
        AttributeValue value = detail::attribute_from_json(attr);
        if (detail::is_rejected_gemm_transpose(*spec, name, value))
          continue;
        bool known = std::any_of(spec->attrs.begin(), spec->attrs.end(),
                                 [&](const AttrSpec &a) { return a.name == name; });
        if (!known)
          fail("UnsupportedAttribute",
               "operator " + op_type + " has no attribute '" + name + "'");
        attrs.emplace(std::move(name), std::move(value));
      }

      std::vector<ValueId> operands;
      for (const Json &in : node.at("inputs")) {
        auto it = values.find(in.get<std::string>());
        if (it == values.end())
          fail("ParseError", "node input '" + in.get<std::string>() +
                                 "' is not defined before use (graph must be topologically sorted)");
        operands.push_back(it->second);
      }

      const Json &outputs = node.at("outputs");
      if (outputs.size() != 1)
        fail("ParseError", "operator " + op_type + " must have exactly one output");
      std::string out_name = outputs[0].get<std::string>();
      if (values.count(out_name))
        fail("ParseError", "value '" + out_name + "' defined twice");
      values[out_name] =
          builder.op(spec->kind, std::move(operands), std::move(attrs), std::nullopt, out_name);
    }

    // Optional per-value type annotations for intermediate values.
    for (const Json &info : graph.value("value_info", Json::array())) {
      std::string name = info.at("name").get<std::string>();
      auto it = values.find(name);
      if (it == values.end())
        fail("ParseError", "value_info names unknown value '" + name + "'");
      TensorType declared = detail::type_from_json(info.at("type"));
      TensorType &current = builder.function().type_of(it->second);
      if (declared.dtype != current.dtype)
        fail("ParseError", "value_info '" + name + "' dtype disagrees with the producing node");
      if (!current.shape.ranked())
        current.shape = declared.shape;
      else if (declared.shape.ranked() && declared.shape != current.shape)
        fail("ParseError", "value_info '" + name + "' conflicts with known shape");
    }

    std::vector<ValueId> results;
    for (const Json &output : graph.value("outputs", Json::array())) {
      std::string name = output.at("name").get<std::string>();
      auto it = values.find(name);
      if (it == values.end())
        fail("ParseError", "graph output '" + name + "' is not produced by any node");
      TensorType declared = detail::type_from_json(output.at("type"));
      TensorType &current = builder.function().type_of(it->second);
      if (declared.dtype != current.dtype)
        fail("ParseError", "graph output '" + name + "' dtype disagrees with its defining node");
      if (!current.shape.ranked())
        current.shape = declared.shape; // adopt the declared output shape
      else if (declared.shape.ranked() && declared.shape != current.shape)
        fail("ParseError", "graph output '" + name + "' declared shape " + declared.shape.str() +
                               " conflicts with " + current.shape.str());
      results.push_back(it->second);
    }
    builder.ret(std::move(results));

    GraphModule m = builder.finish();
    verify_or_throw(m, "imported model does not verify");
    return m;
  } catch (const nlohmann::json::exception &e) {
    fail("ParseError", manifest_path.string() + ": " + e.what());
  }
}

/// Writes model.json (+ payload files for large constants) such that
/// importing the result reproduces the module. Returns the manifest.
inline Json export_model(const GraphModule &module, const std::filesystem::path &out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    fail("IoError", "cannot create " + out_dir.string() + ": " + ec.message());

  const GraphFunction &fn = module.main();

  // Assign every live value a unique export name, preferring import names.
  std::map<ValueId, std::string> names;
  std::set<std::string> used;
  auto assign = [&](ValueId v, const std::string &fallback) {
    const std::string &stored = fn.values[static_cast<std::size_t>(v)].name;
    std::string name = stored.empty() ? fallback : stored;
    std::string candidate = name;
    int suffix = 1;
    while (!used.insert(candidate).second)
      candidate = name + "_" + std::to_string(suffix++);
    names[v] = candidate;
  };
  for (std::size_t i = 0; i < fn.inputs.size(); ++i)
    assign(fn.inputs[i], "input_" + std::to_string(i));
  for (std::size_t i = 0; i < fn.ops.size(); ++i) {
    const GraphOp &op = fn.ops[i];
    for (ValueId r : op.results)
      assign(r, (op.kind == OpKind::Constant ? "cst_" : "v_") + std::to_string(r));
  }

  Json graph;
  graph["name"] = fn.name;

  Json nodes = Json::array();
  Json initializers = Json::array();
  for (const GraphOp &op : fn.ops) {
    if (op.kind == OpKind::Constant) {
      const TensorValue &value = op.tensor_attr("value");
      const std::string &name = names.at(op.results[0]);
      if (value.size() <= kInlineElementLimit) {
        Json init = detail::tensor_to_json(value);
        Json entry;
        entry["name"] = name;
        for (auto &[k, v] : init.items())
          entry[k] = v;
        initializers.push_back(std::move(entry));
      } else {
        write_tensor_file(out_dir / (name + ".tensor"), value);
        Json entry;
        entry["name"] = name;
        Json declared = detail::type_to_json(value.type());
        for (auto &[k, v] : declared.items())
          entry[k] = v;
        initializers.push_back(std::move(entry));
      }
      continue;
    }
    Json node;
    node["op_type"] = std::string(op_name(op.kind));
    Json ins = Json::array();
    for (ValueId o : op.operands)
      ins.push_back(names.at(o));
    node["inputs"] = std::move(ins);
    node["outputs"] = Json::array({names.at(op.results[0])});
    Json attrs = Json::array();
    for (const auto &[name, value] : op.attributes)
      attrs.push_back(detail::attribute_to_json(name, value));
    node["attributes"] = std::move(attrs);
    nodes.push_back(std::move(node));
  }
  graph["nodes"] = std::move(nodes);

  Json inputs = Json::array();
  for (ValueId v : fn.inputs) {
    Json entry;
    entry["name"] = names.at(v);
    entry["type"] = detail::type_to_json(fn.type_of(v));
    inputs.push_back(std::move(entry));
  }
  graph["inputs"] = std::move(inputs);

  Json outputs = Json::array();
  for (ValueId v : fn.results) {
    Json entry;
    entry["name"] = names.at(v);
    entry["type"] = detail::type_to_json(fn.type_of(v));
    outputs.push_back(std::move(entry));
  }
  graph["outputs"] = std::move(outputs);

  // Ranked intermediate types would be lost without value_info entries.
  Json value_info = Json::array();
  std::set<ValueId> result_set(fn.results.begin(), fn.results.end());
  for (const GraphOp &op : fn.ops) {
    if (op.kind == OpKind::Constant)
      continue;
    for (ValueId r : op.results) {
      if (result_set.count(r) || !fn.type_of(r).shape.ranked())
        continue;
      Json entry;
      entry["name"] = names.at(r);
      entry["type"] = detail::type_to_json(fn.type_of(r));
      value_info.push_back(std::move(entry));
    }
  }
  if (!value_info.empty())
    graph["value_info"] = std::move(value_info);
  graph["initializers"] = std::move(initializers);

  Json root;
  root["ir_version"] = 3;
  root["producer_name"] = "loom";
  root["graph"] = std::move(graph);

  std::ofstream os(out_dir / "model.json");
  if (!os)
    fail("IoError", "cannot write " + (out_dir / "model.json").string());
  os << root.dump(2) << "\n";
  if (!os)
    fail("IoError", "short write to model.json");
  return root;
}

} // namespace loom
