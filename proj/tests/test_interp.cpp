/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "loom/interp.hpp"
#include "loom/pipeline.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace loom;

namespace {

GraphModule add_module() {
  GraphBuilder b;
  TensorType t{DType::F32, Shape{3, 4, 5}};
  ValueId x = b.input(t);
  ValueId y = b.input(t);
  b.ret({b.op(OpKind::Add, {x, y}, {}, t)});
  return b.finish();
}

} // namespace

TEST_CASE("interpret the add testcase") {
  CompiledModel c = compile_module(add_module());
  TensorValue x = TensorValue::f32(Shape{3, 4, 5}, std::vector<float>(60, 1.0f));
  TensorValue y = TensorValue::f32(Shape{3, 4, 5}, std::vector<float>(60, 2.0f));
  auto out = interpret(c.program, std::array{x, y});
  REQUIRE(out.size() == 1);
  for (float v : out[0].f32_data())
    CHECK(v == 3.0f);
}

TEST_CASE("interpret the LeakyRelu model semantics") {
  GraphBuilder b;
  TensorType t{DType::F32, Shape{3}};
  ValueId x = b.input(t);
  b.ret({b.op(OpKind::LeakyRelu, {x}, {{"alpha", 0.1f}}, t)});
  CompiledModel c = compile_module(b.finish());

  auto out = interpret(c.program, std::array{TensorValue::f32(Shape{3}, {-10.0f, 0.0f, 10.0f})});
  CHECK(out[0].f32_data() == std::vector<float>{-1.0f, 0.0f, 10.0f});
}

TEST_CASE("interpretation is deterministic") {
  GraphBuilder b;
  Shape s{4, 4};
  ValueId a = b.input(TensorType{DType::F32, s});
  ValueId w = b.input(TensorType{DType::F32, s});
  ValueId mm = b.op(OpKind::MatMul, {a, w});
  b.ret({b.op(OpKind::Exp, {mm})});
  CompiledModel c = compile_module(b.finish());

  std::mt19937 rng(5);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> av(16), wv(16);
  for (auto &v : av)
    v = dist(rng);
  for (auto &v : wv)
    v = dist(rng);
  TensorValue ta = TensorValue::f32(s, av), tw = TensorValue::f32(s, wv);

  auto first = interpret(c.program, std::array{ta, tw});
  for (int i = 0; i < 5; ++i) {
    auto again = interpret(c.program, std::array{ta, tw});
    CHECK(again[0].bit_equal(first[0]));
  }
}

TEST_CASE("arity and type mismatches are rejected") {
  CompiledModel c = compile_module(add_module());
  TensorValue x = TensorValue::f32(Shape{3, 4, 5}, std::vector<float>(60, 0.0f));
  CHECK_THROWS_WITH(interpret(c.program, std::array{x}),
                    Catch::Matchers::ContainsSubstring("ArityMismatch"));
  TensorValue bad = TensorValue::f32(Shape{3, 4}, std::vector<float>(12, 0.0f));
  CHECK_THROWS_WITH(interpret(c.program, std::array{x, bad}),
                    Catch::Matchers::ContainsSubstring("TypeMismatch"));
}

TEST_CASE("debug mode catches reads of never-written elements") {
  // hand-built program that loads an alloc before storing to it
  AffineProgram p;
  p.name = "main_graph";
  p.buffers.push_back(BufferDecl{"in", TensorType{DType::F32, Shape{2}}, {}, true});
  p.buffers.push_back(BufferDecl{"tmp", TensorType{DType::F32, Shape{2}}, {}, false});
  p.entry_point = EntryPointDescriptor{"main_graph", 1, 1};
  p.results.push_back(1);
  p.num_ivs = 1;
  AffineNest nest;
  nest.loops.push_back(AffineFor{0, AffineExpr::constant_expr(0),
                                 {AffineExpr::constant_expr(2)}, 1});
  ScalarOp load{ScalarKind::Load, DType::F32, 1, {AffineExpr::var(0)}, {}, 0, 0};
  nest.body.push_back(load);
  ScalarOp store{ScalarKind::Store, DType::F32, 1, {AffineExpr::var(0)},
                 {ScalarOperand::val(0)}, 0, 0};
  nest.body.push_back(store);
  p.nests.push_back(std::move(nest));

  TensorValue in = TensorValue::f32(Shape{2}, {1.0f, 2.0f});

  // release mode: zero-fill
  auto out = interpret(p, std::array{in});
  CHECK(out[0].f32_data() == std::vector<float>{0.0f, 0.0f});

  // debug mode: hard error
  ExecOptions debug;
  debug.check_uninitialized_reads = true;
  CHECK_THROWS_WITH(interpret(p, std::array{in}, debug),
                    Catch::Matchers::ContainsSubstring("UninitializedRead"));
}

TEST_CASE("trip counts multiply out to the iteration domain") {
  CompiledModel c = compile_module(add_module());
  auto counts = trip_count_report(c.program);
  REQUIRE(counts.size() == 3);
  CHECK(counts.at(0).iterations == 3);
  CHECK(counts.at(1).iterations == 12);
  CHECK(counts.at(2).iterations == 60); // innermost body runs 3*4*5 times
}

TEST_CASE("innermost trip counts survive any legal schedule") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    GraphBuilder b;
    Shape s{6, 8};
    ValueId x = b.input(TensorType{DType::F32, s});
    ValueId y = b.input(TensorType{DType::F32, s});
    b.ret({b.op(OpKind::Add, {x, y})});
    GraphModule m = b.finish();

    CompileOptions opt;
    if (rng() % 2)
      opt.tiles = {{"Add", 1 + static_cast<std::int64_t>(rng() % 5)}};
    CompiledModel c = compile_module(m, opt);
    auto counts = trip_count_report(c.program);
    std::int32_t innermost_iv = c.program.nests.back().loops.back().iv;
    CHECK(counts.at(innermost_iv).iterations == 48);
  }
}
