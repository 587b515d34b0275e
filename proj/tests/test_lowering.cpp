/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "loom/affine_print.hpp"
#include "loom/graph_eval.hpp"
#include "loom/loop_print.hpp"
#include "loom/pipeline.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace loom;

namespace {

TensorValue random_f32(std::mt19937 &rng, const Shape &shape, float lo = -3.0f, float hi = 3.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> data(static_cast<std::size_t>(shape.elem_count()));
  for (float &x : data)
    x = dist(rng);
  return TensorValue::f32(shape, std::move(data));
}

GraphModule add_module() {
  GraphBuilder b;
  TensorType t{DType::F32, Shape{3, 4, 5}};
  ValueId x = b.input(t);
  ValueId y = b.input(t);
  b.ret({b.op(OpKind::Add, {x, y}, {}, t)});
  return b.finish();
}

bool max_rel_close(const TensorValue &a, const TensorValue &b, double tol) {
  if (!(a.type() == b.type()))
    return false;
  for (std::size_t i = 0; i < a.f32_data().size(); ++i) {
    double x = a.f32_data()[i], y = b.f32_data()[i];
    if (std::abs(x - y) > tol * (1.0 + std::abs(y)))
      return false;
  }
  return true;
}

} // namespace

TEST_CASE("the add testcase lowers to the canonical loop text") {
  CompiledModel c = compile_module(add_module());
  std::string expected =
      "module {\n"
      "  func @main_graph(%arg0: memref<3x4x5xf32>, %arg1: memref<3x4x5xf32>) ->"
      " memref<3x4x5xf32> {\n"
      "    %0 = alloc() : memref<3x4x5xf32>\n"
      "    %1:3 = krnl.define_loops 3\n"
      "    krnl.iterate(%1#0, %1#1, %1#2) with (%1#0 -> %arg2 = 0 to 3, %1#1 -> %arg3 = 0 to 4,"
      " %1#2 -> %arg4 = 0 to 5) {\n"
      "      %2 = affine.load %arg0[%arg2, %arg3, %arg4] : memref<3x4x5xf32>\n"
      "      %3 = affine.load %arg1[%arg2, %arg3, %arg4] : memref<3x4x5xf32>\n"
      "      %4 = addf %2, %3 : f32\n"
      "      affine.store %4, %0[%arg2, %arg3, %arg4] : memref<3x4x5xf32>\n"
      "    }\n"
      "    std.return %0 : memref<3x4x5xf32>\n"
      "  }\n"
      "  \"krnl.entry_point\"() {func = @main_graph, numInputs = 2 : i32, numOutputs = 1 : i32}"
      " : () -> ()\n"
      "}\n";
  CHECK(print_loop_module(c.loops) == expected);
}

TEST_CASE("the add testcase lowers to the canonical affine text") {
  CompiledModel c = compile_module(add_module());
  std::string expected =
      "module {\n"
      "  func @main_graph(%arg0: memref<3x4x5xf32>, %arg1: memref<3x4x5xf32>) ->"
      " memref<3x4x5xf32> {\n"
      "    %0 = alloc() : memref<3x4x5xf32>\n"
      "    affine.for %arg2 = 0 to 3 {\n"
      "      affine.for %arg3 = 0 to 4 {\n"
      "        affine.for %arg4 = 0 to 5 {\n"
      "          %1 = affine.load %arg0[%arg2, %arg3, %arg4] : memref<3x4x5xf32>\n"
      "          %2 = affine.load %arg1[%arg2, %arg3, %arg4] : memref<3x4x5xf32>\n"
      "          %3 = addf %1, %2 : f32\n"
      "          affine.store %3, %0[%arg2, %arg3, %arg4] : memref<3x4x5xf32>\n"
      "        }\n"
      "      }\n"
      "    }\n"
      "    std.return %0 : memref<3x4x5xf32>\n"
      "  }\n"
      "  \"krnl.entry_point\"() {func = @main_graph, numInputs = 2 : i32, numOutputs = 1 : i32}"
      " : () -> ()\n"
      "}\n";
  CHECK(emit_affine_text(c.program) == expected);
}

TEST_CASE("blocking by 2 prints the tile-step form") {
  GraphBuilder b;
  ValueId a = b.input(TensorType{DType::F32, Shape{10, 16}});
  ValueId w = b.input(TensorType{DType::F32, Shape{16, 10}});
  b.ret({b.op(OpKind::MatMul, {a, w})});
  CompileOptions opt;
  opt.tiles = {{"MatMul", 2}};
  CompiledModel c = compile_module(b.finish(), opt);
  std::string text = emit_affine_text(c.program);

  CHECK(text.find("#map0 = affine_map<(d0) -> (d0)>") != std::string::npos);
  CHECK(text.find("#map1 = affine_map<(d0) -> (d0 + 2)>") != std::string::npos);
  CHECK(text.find("affine.for %arg4 = 0 to 10 step 2 {") != std::string::npos);
  CHECK(text.find("affine.for %arg5 = #map0(%arg4) to #map1(%arg4) {") != std::string::npos);
}

TEST_CASE("non-dividing tiles clamp with an affine min") {
  GraphBuilder b;
  ValueId x = b.input(TensorType{DType::F32, Shape{10}});
  b.ret({b.op(OpKind::Relu, {x})});
  CompileOptions opt;
  opt.tiles = {{"Relu", 3}};
  CompiledModel c = compile_module(b.finish(), opt);
  std::string text = emit_affine_text(c.program);
  CHECK(text.find("min #map1(%arg1)") != std::string::npos);
  CHECK(text.find("(d0 + 3, 10)") != std::string::npos);

  auto counts = trip_count_report(c.program);
  CHECK(counts.at(0).iterations == 4);  // outer
  CHECK(counts.at(1).iterations == 10); // inner covers every element
}

TEST_CASE("tiling a missing op kind is an error") {
  CompileOptions opt;
  opt.tiles = {{"Conv", 4}};
  CHECK_THROWS_WITH(compile_module(add_module(), opt),
                    Catch::Matchers::ContainsSubstring("UnknownTileTarget"));
}

TEST_CASE("reshape lowers to a flat copy") {
  GraphBuilder b;
  ValueId x = b.input(TensorType{DType::F32, Shape{3, 4, 5}});
  ValueId target = b.constant(TensorValue::i64(Shape{1}, {60}));
  b.ret({b.op(OpKind::Reshape, {x, target})});
  CompiledModel c = compile_module(b.finish());

  std::mt19937 rng(3);
  TensorValue in = random_f32(rng, Shape{3, 4, 5});
  auto out = interpret(c.program, std::array{in});
  REQUIRE(out.size() == 1);
  CHECK(out[0].shape() == Shape{60});
  CHECK(out[0].f32_data() == in.f32_data()); // row-major bijection
}

TEST_CASE("matmul on small integer matrices is exact") {
  GraphBuilder b;
  ValueId a = b.input(TensorType{DType::F32, Shape{2, 3}});
  ValueId w = b.input(TensorType{DType::F32, Shape{3, 2}});
  b.ret({b.op(OpKind::MatMul, {a, w})});
  GraphModule m = b.finish();
  CompiledModel c = compile_module(m);

  TensorValue av = TensorValue::f32(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  TensorValue wv = TensorValue::f32(Shape{3, 2}, {7, 8, 9, 10, 11, 12});
  auto got = interpret(c.program, std::array{av, wv});
  auto expected = reference_eval(pass_shape_inference(m), std::array{av, wv});
  CHECK(got[0].bit_equal(expected[0]));
  CHECK(got[0].f32_data() == std::vector<float>{58, 64, 139, 154});
}

TEST_CASE("tiled and untiled matmul agree bit for bit") {
  GraphBuilder b;
  ValueId a = b.input(TensorType{DType::F32, Shape{6, 5}});
  ValueId w = b.input(TensorType{DType::F32, Shape{5, 7}});
  b.ret({b.op(OpKind::MatMul, {a, w})});
  GraphModule m = b.finish();

  std::mt19937 rng(17);
  TensorValue av = random_f32(rng, Shape{6, 5});
  TensorValue wv = random_f32(rng, Shape{5, 7});

  auto plain = run_module(m, std::array{av, wv});
  for (std::int64_t tile : {2, 3, 4}) {
    CompileOptions opt;
    opt.tiles = {{"MatMul", tile}};
    auto tiled = run_module(m, std::array{av, wv}, opt);
    CHECK(tiled[0].bit_equal(plain[0]));
  }
}

namespace {

// One randomized pipeline-vs-reference trial per op kind.
void check_op(std::mt19937 &rng, OpKind kind, bool exact) {
  GraphBuilder b;
  std::vector<TensorValue> inputs;
  std::uniform_int_distribution<std::int64_t> dim(1, 8);

  switch (kind) {
  case OpKind::Add:
  case OpKind::Mul:
  case OpKind::Sub: {
    Shape s{dim(rng), dim(rng)};
    Shape s2 = rng() % 2 ? s : Shape{1, *s.dim(1)}; // sometimes broadcast
    ValueId x = b.input(TensorType{DType::F32, s});
    ValueId y = b.input(TensorType{DType::F32, s2});
    b.ret({b.op(kind, {x, y})});
    inputs = {random_f32(rng, s), random_f32(rng, s2)};
    break;
  }
  case OpKind::Abs:
  case OpKind::Exp:
  case OpKind::Relu: {
    Shape s{dim(rng), dim(rng), dim(rng)};
    ValueId x = b.input(TensorType{DType::F32, s});
    b.ret({b.op(kind, {x})});
    inputs = {random_f32(rng, s)};
    break;
  }
  case OpKind::LeakyRelu: {
    Shape s{dim(rng)};
    ValueId x = b.input(TensorType{DType::F32, s});
    b.ret({b.op(kind, {x}, {{"alpha", 0.1f}})});
    inputs = {random_f32(rng, s)};
    break;
  }
  case OpKind::Identity: {
    Shape s{dim(rng), dim(rng)};
    ValueId x = b.input(TensorType{DType::F32, s});
    b.ret({b.op(kind, {x})});
    inputs = {random_f32(rng, s)};
    break;
  }
  default:
    FAIL("unhandled kind in check_op");
  }

  GraphModule m = b.finish();
  auto expected = reference_eval(pass_shape_inference(m), inputs);
  auto got = run_module(m, inputs);
  REQUIRE(got.size() == expected.size());
  if (exact)
    CHECK(got[0].bit_equal(expected[0]));
  else
    CHECK(max_rel_close(got[0], expected[0], 1e-5));
}

} // namespace

TEST_CASE("elementwise ops match the reference bit for bit") {
  std::mt19937 rng(71);
  for (OpKind kind : {OpKind::Add, OpKind::Mul, OpKind::Sub, OpKind::Abs, OpKind::Relu,
                      OpKind::LeakyRelu, OpKind::Identity})
    for (int trial = 0; trial < 10; ++trial)
      check_op(rng, kind, /*exact=*/true);
  for (int trial = 0; trial < 10; ++trial)
    check_op(rng, OpKind::Exp, /*exact=*/false);
}

TEST_CASE("conv with padding matches the reference") {
  std::mt19937 rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<std::int64_t> dim(3, 8);
    std::int64_t h = dim(rng), w = dim(rng);
    std::int64_t kh = 1 + static_cast<std::int64_t>(rng() % 3);
    std::int64_t kw = 1 + static_cast<std::int64_t>(rng() % 3);
    std::vector<std::int64_t> pads{static_cast<std::int64_t>(rng() % 2),
                                   static_cast<std::int64_t>(rng() % 2),
                                   static_cast<std::int64_t>(rng() % 2),
                                   static_cast<std::int64_t>(rng() % 2)};
    std::vector<std::int64_t> strides{1 + static_cast<std::int64_t>(rng() % 2),
                                      1 + static_cast<std::int64_t>(rng() % 2)};
    Shape xs{2, 3, h, w};
    Shape ws{2, 3, kh, kw};

    GraphBuilder b;
    ValueId x = b.input(TensorType{DType::F32, xs});
    ValueId wv = b.input(TensorType{DType::F32, ws});
    b.ret({b.op(OpKind::Conv, {x, wv}, {{"strides", strides}, {"pads", pads}})});
    GraphModule m = b.finish();

    std::vector<TensorValue> inputs{random_f32(rng, xs), random_f32(rng, ws)};
    auto expected = reference_eval(pass_shape_inference(m), inputs);
    auto got = run_module(m, inputs);
    CHECK(max_rel_close(got[0], expected[0], 1e-5));
  }
}

TEST_CASE("maxpool with padding matches the reference exactly") {
  std::mt19937 rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<std::int64_t> dim(3, 8);
    std::int64_t h = dim(rng), w = dim(rng);
    std::vector<std::int64_t> kernel{1 + static_cast<std::int64_t>(rng() % 3),
                                     1 + static_cast<std::int64_t>(rng() % 3)};
    std::vector<std::int64_t> pads{static_cast<std::int64_t>(rng() % 2),
                                   static_cast<std::int64_t>(rng() % 2),
                                   static_cast<std::int64_t>(rng() % 2),
                                   static_cast<std::int64_t>(rng() % 2)};
    Shape xs{1, 2, h, w};

    GraphBuilder b;
    ValueId x = b.input(TensorType{DType::F32, xs});
    b.ret({b.op(OpKind::MaxPool, {x},
                {{"kernel_shape", kernel},
                 {"pads", pads},
                 {"strides", std::vector<std::int64_t>{1, 1}}})});
    GraphModule m = b.finish();

    std::vector<TensorValue> inputs{random_f32(rng, xs)};
    auto expected = reference_eval(pass_shape_inference(m), inputs);
    auto got = run_module(m, inputs);
    CHECK(got[0].bit_equal(expected[0]));
  }
}

TEST_CASE("reductions and gemm stay within relative tolerance") {
  std::mt19937 rng(83);
  for (int trial = 0; trial < 10; ++trial) {
    // ReduceSum over random axes
    Shape s{2, 3, 4};
    std::vector<std::int64_t> axes;
    for (int i = 0; i < 3; ++i)
      if (rng() % 2)
        axes.push_back(i);
    GraphBuilder b;
    ValueId x = b.input(TensorType{DType::F32, s});
    b.ret({b.op(OpKind::ReduceSum, {x},
                {{"axes", axes}, {"keepdims", std::int64_t(rng() % 2)}})});
    GraphModule m = b.finish();
    std::vector<TensorValue> inputs{random_f32(rng, s)};
    auto expected = reference_eval(pass_shape_inference(m), inputs);
    auto got = run_module(m, inputs);
    CHECK(max_rel_close(got[0], expected[0], 1e-5));
  }

  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<std::int64_t> dim(1, 8);
    std::int64_t mdim = dim(rng), k = dim(rng), n = dim(rng);
    GraphBuilder b;
    ValueId a = b.input(TensorType{DType::F32, Shape{mdim, k}});
    ValueId w = b.input(TensorType{DType::F32, Shape{k, n}});
    ValueId c = b.input(TensorType{DType::F32, Shape{n}});
    b.ret({b.op(OpKind::Gemm, {a, w, c}, {{"alpha", 0.5f}, {"beta", 2.0f}})});
    GraphModule m = b.finish();
    std::vector<TensorValue> inputs{random_f32(rng, Shape{mdim, k}),
                                    random_f32(rng, Shape{k, n}), random_f32(rng, Shape{n})};
    auto expected = reference_eval(pass_shape_inference(m), inputs);
    auto got = run_module(m, inputs);
    CHECK(max_rel_close(got[0], expected[0], 1e-5));
  }
}

TEST_CASE("reduce-l1 lowers directly when decomposition is off") {
  GraphBuilder b;
  Shape s{3, 4};
  ValueId x = b.input(TensorType{DType::F32, s});
  b.ret({b.op(OpKind::ReduceL1, {x},
              {{"axes", std::vector<std::int64_t>{1}}, {"keepdims", std::int64_t(0)}})});
  GraphModule m = b.finish();

  std::mt19937 rng(89);
  std::vector<TensorValue> inputs{random_f32(rng, s)};
  auto expected = reference_eval(pass_shape_inference(m), inputs);

  CompileOptions opt;
  opt.decompose = false;
  auto got = run_module(m, inputs, opt);
  CHECK(max_rel_close(got[0], expected[0], 1e-5));
}

TEST_CASE("identity lowers to a copy when rewrite is off") {
  GraphBuilder b;
  Shape s{4};
  ValueId x = b.input(TensorType{DType::F32, s});
  b.ret({b.op(OpKind::Identity, {x})});
  GraphModule m = b.finish();

  CompileOptions opt;
  opt.rewrite = false;
  TensorValue in = TensorValue::f32(s, {1, -2, 3, -4});
  auto got = run_module(m, std::array{in}, opt);
  CHECK(got[0].bit_equal(in));
}

TEST_CASE("scalar graphs lower through a unit loop") {
  GraphBuilder b;
  ValueId x = b.input(TensorType{DType::F32, Shape::scalar()});
  ValueId c = b.constant(TensorValue::scalar_f32(2.5f));
  b.ret({b.op(OpKind::Mul, {x, c})});
  auto got = run_module(b.finish(), std::array{TensorValue::scalar_f32(4.0f)});
  CHECK(got[0].f32_data() == std::vector<float>{10.0f});
}

TEST_CASE("dynamic shapes are rejected at the loop boundary") {
  GraphBuilder b;
  ValueId x = b.input(TensorType{DType::F32, Shape(std::vector<DimSize>{std::nullopt})});
  b.ret({b.op(OpKind::Abs, {x})});
  GraphModule m = pass_shape_inference(b.finish());
  CHECK_THROWS_WITH(lower_graph_to_loops(m),
                    Catch::Matchers::ContainsSubstring("DynamicShapeUnsupported"));
}
