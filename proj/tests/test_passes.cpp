/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "loom/graph_eval.hpp"
#include "loom/graph_print.hpp"
#include "loom/passes.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace loom;

namespace {

TensorValue random_f32(std::mt19937 &rng, const Shape &shape, float lo = -4.0f, float hi = 4.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> data(static_cast<std::size_t>(shape.elem_count()));
  for (float &x : data)
    x = dist(rng);
  return TensorValue::f32(shape, std::move(data));
}

// Small integers stored as f32: addition reassociation stays exact.
TensorValue random_small_ints(std::mt19937 &rng, const Shape &shape) {
  std::uniform_int_distribution<int> dist(-8, 8);
  std::vector<float> data(static_cast<std::size_t>(shape.elem_count()));
  for (float &x : data)
    x = static_cast<float>(dist(rng));
  return TensorValue::f32(shape, std::move(data));
}

int count_kind(const GraphModule &m, OpKind kind) {
  int n = 0;
  for (const GraphOp &op : m.main().ops)
    if (op.kind == kind)
      ++n;
  return n;
}

} // namespace

//===----------------------------------------------------------------------===//
// decompose
//===----------------------------------------------------------------------===//

TEST_CASE("decompose rewrites ReduceL1 into ReduceSum of Abs") {
  GraphBuilder b;
  TensorType t{DType::F32, Shape{2, 3}};
  ValueId x = b.input(t);
  ValueId r = b.op(OpKind::ReduceL1, {x},
                   {{"axes", std::vector<std::int64_t>{1}}, {"keepdims", std::int64_t(1)}});
  b.ret({r});
  GraphModule m = pass_decompose(b.finish());

  REQUIRE(m.main().ops.size() == 2);
  CHECK(m.main().ops[0].kind == OpKind::Abs);
  CHECK(m.main().ops[1].kind == OpKind::ReduceSum);
  CHECK(m.main().ops[1].ints_attr("axes") == std::vector<std::int64_t>{1});
  CHECK(m.main().ops[1].i64_attr("keepdims") == 1);
  CHECK(count_kind(m, OpKind::ReduceL1) == 0);
  CHECK(verify(m).empty());
}

TEST_CASE("decompose leaves ReduceL1-free modules unchanged") {
  GraphBuilder b;
  TensorType t{DType::F32, Shape{4}};
  ValueId x = b.input(t);
  b.ret({b.op(OpKind::Relu, {x}, {}, t)});
  GraphModule m = b.finish();
  GraphModule after = pass_decompose(m);
  CHECK(structural_equal(m, after));
}

TEST_CASE("decompose preserves reference outputs") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    GraphBuilder b;
    TensorType t{DType::F32, Shape{2, 3}};
    ValueId x = b.input(t);
    std::int64_t keepdims = rng() % 2;
    ValueId r = b.op(OpKind::ReduceL1, {x},
                     {{"axes", std::vector<std::int64_t>{1}}, {"keepdims", keepdims}});
    b.ret({r});
    GraphModule before = b.finish();
    GraphModule after = pass_decompose(before);

    TensorValue in = random_f32(rng, Shape{2, 3});
    auto expected = reference_eval(before, std::array{in});
    auto actual = reference_eval(after, std::array{in});
    REQUIRE(actual.size() == expected.size());
    CHECK(actual[0].bit_equal(expected[0]));
  }
}

//===----------------------------------------------------------------------===//
// shape inference
//===----------------------------------------------------------------------===//

TEST_CASE("shape inference fills in unranked results") {
  GraphBuilder b;
  TensorType in{DType::F32, Shape{3, 4, 5}};
  ValueId x = b.input(in);
  ValueId y = b.op(OpKind::LeakyRelu, {x}, {{"alpha", 0.1f}}); // defaults to unranked
  b.ret({y});
  GraphModule m = pass_shape_inference(b.finish());
  CHECK(m.main().type_of(m.main().results[0]) == in);
}

TEST_CASE("matmul shape rule") {
  GraphBuilder b;
  ValueId a = b.input(TensorType{DType::F32, Shape{1, 256}});
  ValueId w = b.input(TensorType{DType::F32, Shape{256, 10}});
  ValueId y = b.op(OpKind::MatMul, {a, w});
  b.ret({y});
  GraphModule m = pass_shape_inference(b.finish());
  CHECK(m.main().type_of(m.main().results[0]).shape == Shape{1, 10});

  GraphBuilder bad;
  ValueId p = bad.input(TensorType{DType::F32, Shape{2, 3}});
  ValueId q = bad.input(TensorType{DType::F32, Shape{4, 2}});
  bad.ret({bad.op(OpKind::MatMul, {p, q})});
  CHECK_THROWS_WITH(pass_shape_inference(bad.finish()),
                    Catch::Matchers::ContainsSubstring("ShapeMismatch") &&
                        Catch::Matchers::ContainsSubstring("MatMul"));
}

TEST_CASE("conv shape rule") {
  GraphBuilder b;
  ValueId x = b.input(TensorType{DType::F32, Shape{1, 1, 28, 28}});
  ValueId w = b.input(TensorType{DType::F32, Shape{2, 1, 3, 3}});
  ValueId y = b.op(OpKind::Conv, {x, w},
                   {{"strides", std::vector<std::int64_t>{1, 1}},
                    {"pads", std::vector<std::int64_t>{1, 1, 1, 1}}});
  b.ret({y});
  GraphModule m = pass_shape_inference(b.finish());
  CHECK(m.main().type_of(m.main().results[0]).shape == Shape{1, 2, 28, 28});
}

TEST_CASE("conv and maxpool output dims match the windowed enumeration oracle") {
  // Oracle: count the window start positions a stride walk actually visits.
  auto enumerate = [](std::int64_t extent, std::int64_t pad_begin, std::int64_t pad_end,
                      std::int64_t window, std::int64_t stride) {
    std::int64_t count = 0;
    for (std::int64_t start = -pad_begin; start + window <= extent + pad_end; start += stride)
      ++count;
    return count;
  };

  struct Case {
    std::int64_t extent, pad_begin, pad_end, window, stride;
  };
  const Case cases[] = {
      {28, 1, 1, 3, 1}, {28, 0, 0, 2, 2}, {5, 0, 0, 3, 1}, {5, 1, 1, 3, 2}, {7, 2, 0, 3, 1},
      {7, 0, 2, 3, 3},  {4, 1, 2, 2, 2},  {9, 0, 0, 1, 4}, {6, 2, 2, 5, 1}, {8, 1, 0, 4, 2},
  };
  for (const Case &c : cases) {
    CAPTURE(c.extent, c.pad_begin, c.pad_end, c.window, c.stride);
    CHECK(detail::conv_out_dim(c.extent, c.pad_begin, c.pad_end, c.window, c.stride) ==
          enumerate(c.extent, c.pad_begin, c.pad_end, c.window, c.stride));
  }
}

TEST_CASE("reduce and reshape shape rules") {
  GraphBuilder b;
  ValueId x = b.input(TensorType{DType::F32, Shape{3, 4, 5}});
  ValueId r0 = b.op(OpKind::ReduceSum, {x},
                    {{"axes", std::vector<std::int64_t>{1}}, {"keepdims", std::int64_t(1)}});
  ValueId r1 = b.op(OpKind::ReduceSum, {x},
                    {{"axes", std::vector<std::int64_t>{1}}, {"keepdims", std::int64_t(0)}});
  ValueId r2 = b.op(OpKind::ReduceSum, {x},
                    {{"axes", std::vector<std::int64_t>{}}, {"keepdims", std::int64_t(0)}});
  ValueId shape = b.constant(TensorValue::i64(Shape{2}, {12, -1}));
  ValueId r3 = b.op(OpKind::Reshape, {x, shape});
  b.ret({r0, r1, r2, r3});
  GraphModule m = pass_shape_inference(b.finish());
  const GraphFunction &fn = m.main();
  CHECK(fn.type_of(r0).shape == Shape{3, 1, 5});
  CHECK(fn.type_of(r1).shape == Shape{3, 5});
  CHECK(fn.type_of(r2).shape == Shape::scalar());
  CHECK(fn.type_of(r3).shape == Shape{12, 5});
}

TEST_CASE("shape inference propagates through long chains and partial shapes") {
  GraphBuilder b;
  ValueId x = b.input(TensorType{DType::F32, Shape(std::vector<DimSize>{std::nullopt, DimSize(4)})});
  ValueId cur = x;
  for (int i = 0; i < 50; ++i)
    cur = b.op(OpKind::Abs, {cur});
  b.ret({cur});
  GraphModule m = pass_shape_inference(b.finish());
  CHECK(m.main().type_of(m.main().results[0]).shape.str() == "?x4");

  // a known dim meeting an unknown one through broadcast
  GraphBuilder b2;
  ValueId p = b2.input(TensorType{DType::F32, Shape(std::vector<DimSize>{std::nullopt, DimSize(4)})});
  ValueId q = b2.input(TensorType{DType::F32, Shape{3, 1}});
  b2.ret({b2.op(OpKind::Add, {p, q})});
  GraphModule m2 = pass_shape_inference(b2.finish());
  CHECK(m2.main().type_of(m2.main().results[0]).shape == Shape{3, 4});
}

//===----------------------------------------------------------------------===//
// graph rewrite
//===----------------------------------------------------------------------===//

namespace {

GraphModule mul_add_module(bool extra_use) {
  GraphBuilder b;
  ValueId a = b.input(TensorType{DType::F32, Shape{2, 3}});
  ValueId w = b.input(TensorType{DType::F32, Shape{3, 4}});
  ValueId c = b.input(TensorType{DType::F32, Shape{2, 4}});
  ValueId mm = b.op(OpKind::MatMul, {a, w});
  ValueId sum = b.op(OpKind::Add, {mm, c});
  if (extra_use) {
    ValueId other = b.op(OpKind::Relu, {mm});
    b.ret({sum, other});
  } else {
    b.ret({sum});
  }
  return pass_shape_inference(b.finish());
}

} // namespace

TEST_CASE("MulAddToGemm fires on a single-use MatMul") {
  GraphModule m = pass_graph_rewrite(mul_add_module(false));
  CHECK(count_kind(m, OpKind::MatMul) == 0);
  CHECK(count_kind(m, OpKind::Add) == 0);
  REQUIRE(count_kind(m, OpKind::Gemm) == 1);
  const GraphOp &gemm = m.main().ops[0];
  CHECK(gemm.f32_attr("alpha") == 1.0f);
  CHECK(gemm.f32_attr("beta") == 1.0f);
  CHECK(verify(m).empty());
}

TEST_CASE("MulAddToGemm does not fire on a multi-use MatMul") {
  GraphModule m = pass_graph_rewrite(mul_add_module(true));
  CHECK(count_kind(m, OpKind::MatMul) == 1);
  CHECK(count_kind(m, OpKind::Add) == 1);
  CHECK(count_kind(m, OpKind::Gemm) == 0);
}

TEST_CASE("rewrite preserves gemm semantics") {
  std::mt19937 rng(41);
  GraphModule before = mul_add_module(false);
  GraphModule after = pass_graph_rewrite(before);
  TensorValue a = random_f32(rng, Shape{2, 3});
  TensorValue w = random_f32(rng, Shape{3, 4});
  TensorValue c = random_f32(rng, Shape{2, 4});
  auto expected = reference_eval(before, std::array{a, w, c});
  auto actual = reference_eval(after, std::array{a, w, c});
  CHECK(actual[0].bit_equal(expected[0]));
}

TEST_CASE("identity chains vanish") {
  for (int len = 1; len <= 5; ++len) {
    GraphBuilder b;
    TensorType t{DType::F32, Shape{4}};
    ValueId x = b.input(t);
    ValueId cur = x;
    for (int i = 0; i < len; ++i)
      cur = b.op(OpKind::Identity, {cur}, {}, t);
    b.ret({cur});
    GraphModule m = pass_graph_rewrite(b.finish());
    CHECK(m.main().ops.empty());
    CHECK(m.main().results[0] == x);
    CHECK(verify(m).empty());
  }
}

TEST_CASE("rewrite never fuses a shared MatMul on random graphs") {
  std::mt19937 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    GraphBuilder b;
    ValueId a = b.input(TensorType{DType::F32, Shape{2, 3}});
    ValueId w = b.input(TensorType{DType::F32, Shape{3, 4}});
    ValueId c = b.input(TensorType{DType::F32, Shape{2, 4}});
    ValueId mm = b.op(OpKind::MatMul, {a, w});
    ValueId sum = b.op(OpKind::Add, {mm, c});
    bool shared = rng() % 2;
    std::vector<ValueId> results{sum};
    if (shared)
      results.push_back(b.op(OpKind::Abs, {mm}));
    if (rng() % 2)
      results.push_back(b.op(OpKind::Identity, {sum}));
    b.ret(std::move(results));
    GraphModule m = pass_graph_rewrite(pass_shape_inference(b.finish()));
    CHECK(count_kind(m, OpKind::Gemm) == (shared ? 0 : 1));
    CHECK(count_kind(m, OpKind::MatMul) == (shared ? 1 : 0));
    CHECK(count_kind(m, OpKind::Identity) == 0);
    CHECK(verify(m).empty());
  }
}

//===----------------------------------------------------------------------===//
// constant propagation
//===----------------------------------------------------------------------===//

namespace {

TensorType scalar_f32_type() { return TensorType{DType::F32, Shape::scalar()}; }

GraphModule run_constprop(GraphModule m) { return pass_constprop(pass_shape_inference(std::move(m))); }

bool no_foldable_ops_left(const GraphModule &m) {
  const GraphFunction &fn = m.main();
  for (const GraphOp &op : fn.ops) {
    if (op.kind == OpKind::Constant || op.operands.empty())
      continue;
    bool all_const = true;
    for (ValueId o : op.operands)
      if (!fn.is_constant(o))
        all_const = false;
    if (all_const)
      return false;
  }
  return true;
}

} // namespace

TEST_CASE("normalization rule 1: c + x becomes x + c") {
  GraphBuilder b;
  ValueId x = b.input(scalar_f32_type());
  ValueId c = b.constant(TensorValue::scalar_f32(2.0f));
  b.ret({b.op(OpKind::Add, {c, x})});
  GraphModule m = run_constprop(b.finish());

  GraphBuilder e;
  ValueId ex = e.input(scalar_f32_type());
  ValueId ec = e.constant(TensorValue::scalar_f32(2.0f));
  e.ret({e.op(OpKind::Add, {ex, ec}, {}, scalar_f32_type())});
  CHECK(structural_equal(m, e.finish()));
}

TEST_CASE("normalization rule 2: (x + c1) + c2 folds the constants") {
  GraphBuilder b;
  ValueId x = b.input(scalar_f32_type());
  ValueId c1 = b.constant(TensorValue::scalar_f32(1.0f));
  ValueId c2 = b.constant(TensorValue::scalar_f32(2.0f));
  ValueId inner = b.op(OpKind::Add, {x, c1});
  b.ret({b.op(OpKind::Add, {inner, c2})});
  GraphModule m = run_constprop(b.finish());

  GraphBuilder e;
  ValueId ex = e.input(scalar_f32_type());
  ValueId ec = e.constant(TensorValue::scalar_f32(3.0f));
  e.ret({e.op(OpKind::Add, {ex, ec}, {}, scalar_f32_type())});
  CHECK(structural_equal(m, e.finish()));
  CHECK(m.main().ops.size() == 2); // the folded constant and one Add
}

TEST_CASE("normalization rule 3: (x + c) + y hoists the constant") {
  GraphBuilder b;
  ValueId x = b.input(scalar_f32_type());
  ValueId y = b.input(scalar_f32_type());
  ValueId c = b.constant(TensorValue::scalar_f32(5.0f));
  ValueId inner = b.op(OpKind::Add, {x, c});
  b.ret({b.op(OpKind::Add, {inner, y})});
  GraphModule m = run_constprop(b.finish());

  GraphBuilder e;
  ValueId ex = e.input(scalar_f32_type());
  ValueId ey = e.input(scalar_f32_type());
  ValueId ec = e.constant(TensorValue::scalar_f32(5.0f));
  ValueId exy = e.op(OpKind::Add, {ex, ey}, {}, scalar_f32_type());
  e.ret({e.op(OpKind::Add, {exy, ec}, {}, scalar_f32_type())});
  CHECK(structural_equal(m, e.finish()));
}

TEST_CASE("normalization rule 4: x + (y + c) hoists the constant") {
  GraphBuilder b;
  ValueId x = b.input(scalar_f32_type());
  ValueId y = b.input(scalar_f32_type());
  ValueId c = b.constant(TensorValue::scalar_f32(5.0f));
  ValueId inner = b.op(OpKind::Add, {y, c});
  b.ret({b.op(OpKind::Add, {x, inner})});
  GraphModule m = run_constprop(b.finish());

  GraphBuilder e;
  ValueId ex = e.input(scalar_f32_type());
  ValueId ey = e.input(scalar_f32_type());
  ValueId ec = e.constant(TensorValue::scalar_f32(5.0f));
  ValueId exy = e.op(OpKind::Add, {ex, ey}, {}, scalar_f32_type());
  e.ret({e.op(OpKind::Add, {exy, ec}, {}, scalar_f32_type())});
  CHECK(structural_equal(m, e.finish()));
}

TEST_CASE("normalization rule 5: (x + c1) + (y + c2) folds both constants") {
  GraphBuilder b;
  ValueId x = b.input(scalar_f32_type());
  ValueId y = b.input(scalar_f32_type());
  ValueId c1 = b.constant(TensorValue::scalar_f32(1.25f));
  ValueId c2 = b.constant(TensorValue::scalar_f32(2.5f));
  ValueId left = b.op(OpKind::Add, {x, c1});
  ValueId right = b.op(OpKind::Add, {y, c2});
  b.ret({b.op(OpKind::Add, {left, right})});
  GraphModule m = run_constprop(b.finish());

  GraphBuilder e;
  ValueId ex = e.input(scalar_f32_type());
  ValueId ey = e.input(scalar_f32_type());
  ValueId ec = e.constant(TensorValue::scalar_f32(3.75f));
  ValueId exy = e.op(OpKind::Add, {ex, ey}, {}, scalar_f32_type());
  e.ret({e.op(OpKind::Add, {exy, ec}, {}, scalar_f32_type())});
  CHECK(structural_equal(m, e.finish()));
}

TEST_CASE("rule 5 preserves semantics on random tensors") {
  std::mt19937 rng(47);
  for (int trial = 0; trial < 25; ++trial) {
    GraphBuilder b;
    TensorType t{DType::F32, Shape{2, 3}};
    ValueId x = b.input(t);
    ValueId y = b.input(t);
    ValueId c1 = b.constant(random_small_ints(rng, Shape{2, 3}));
    ValueId c2 = b.constant(random_small_ints(rng, Shape{3}));
    ValueId left = b.op(OpKind::Add, {x, c1});
    ValueId right = b.op(OpKind::Add, {y, c2});
    b.ret({b.op(OpKind::Add, {left, right})});
    GraphModule before = pass_shape_inference(b.finish());
    GraphModule after = pass_constprop(before);

    TensorValue vx = random_small_ints(rng, Shape{2, 3});
    TensorValue vy = random_small_ints(rng, Shape{2, 3});
    auto expected = reference_eval(before, std::array{vx, vy});
    auto actual = reference_eval(after, std::array{vx, vy});
    CHECK(actual[0].bit_equal(expected[0]));
  }
}

TEST_CASE("a fully constant graph folds to a single Constant") {
  GraphBuilder b;
  ValueId a = b.constant(TensorValue::f32(Shape{2}, {1.0f, 2.0f}));
  ValueId c = b.constant(TensorValue::f32(Shape{2}, {10.0f, 20.0f}));
  b.ret({b.op(OpKind::Add, {a, c})});
  GraphModule m = run_constprop(b.finish());

  REQUIRE(m.main().ops.size() == 1);
  CHECK(m.main().ops[0].kind == OpKind::Constant);
  CHECK(m.main().ops[0].tensor_attr("value").f32_data() == std::vector<float>{11.0f, 22.0f});
  CHECK(verify(m).empty());
}

TEST_CASE("constprop folds through non-Add ops and mixed chains") {
  GraphBuilder b;
  ValueId x = b.input(scalar_f32_type());
  ValueId c1 = b.constant(TensorValue::scalar_f32(2.0f));
  ValueId c2 = b.constant(TensorValue::scalar_f32(-3.0f));
  ValueId prod = b.op(OpKind::Mul, {c1, c2}); // folds to -6
  ValueId sum = b.op(OpKind::Add, {prod, x}); // rule 1 after folding
  b.ret({sum});
  GraphModule m = run_constprop(b.finish());

  GraphBuilder e;
  ValueId ex = e.input(scalar_f32_type());
  ValueId ec = e.constant(TensorValue::scalar_f32(-6.0f));
  e.ret({e.op(OpKind::Add, {ex, ec}, {}, scalar_f32_type())});
  CHECK(structural_equal(m, e.finish()));
  CHECK(no_foldable_ops_left(m));
}

TEST_CASE("after constprop no op has all-constant operands") {
  std::mt19937 rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    GraphBuilder b;
    TensorType t{DType::F32, Shape{3}};
    ValueId x = b.input(t);
    std::vector<ValueId> pool{x};
    for (int i = 0; i < 6; ++i) {
      if (rng() % 3 == 0) {
        pool.push_back(b.constant(random_small_ints(rng, Shape{3})));
      } else {
        ValueId a = pool[rng() % pool.size()];
        ValueId c = pool[rng() % pool.size()];
        pool.push_back(b.op(OpKind::Add, {a, c}));
      }
    }
    b.ret({pool.back()});
    GraphModule m = run_constprop(b.finish());
    CHECK(no_foldable_ops_left(m));
    CHECK(verify(m).empty());
  }
}

TEST_CASE("the standard pipeline runs in order with toggles") {
  GraphBuilder b;
  TensorType t{DType::F32, Shape{2, 2}};
  ValueId x = b.input(t);
  ValueId l1 = b.op(OpKind::ReduceL1, {x},
                    {{"axes", std::vector<std::int64_t>{0}}, {"keepdims", std::int64_t(1)}});
  ValueId id = b.op(OpKind::Identity, {l1});
  b.ret({id});
  GraphModule m = b.finish();

  GraphModule full = PassPipeline::standard().run(m);
  CHECK(count_kind(full, OpKind::ReduceL1) == 0);
  CHECK(count_kind(full, OpKind::Identity) == 0);

  GraphModule no_decompose = PassPipeline::standard(false, true, true).run(m);
  CHECK(count_kind(no_decompose, OpKind::ReduceL1) == 1);

  GraphModule no_rewrite = PassPipeline::standard(true, false, true).run(m);
  CHECK(count_kind(no_rewrite, OpKind::Identity) == 1);
}
