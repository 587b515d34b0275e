/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- make_mnist.cpp --------------------------===//
//
// Regenerates models/mnist: a small fixed-seed CNN
// (Conv 1->2 3x3 pad 1, Relu, MaxPool 2x2, Reshape, MatMul, Add) plus a
// sample input payload. Run from the repository root:
//
//   build/tools/make_mnist models/mnist
//
//===----------------------------------------------------------------------===//

#include "loom/loom.hpp"

#include <filesystem>
#include <iostream>
#include <random>

using namespace loom;

namespace {

TensorValue random_tensor(std::mt19937 &rng, const Shape &shape, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> data(static_cast<std::size_t>(shape.elem_count()));
  for (float &x : data)
    x = dist(rng);
  return TensorValue::f32(shape, std::move(data));
}

} // namespace

int main(int argc, char **argv) {
  std::filesystem::path out_dir = argc > 1 ? argv[1] : "models/mnist";
  std::mt19937 rng(12345);

  GraphBuilder b;
  ValueId image = b.input(TensorType{DType::F32, Shape{1, 1, 28, 28}}, "image");
  ValueId conv_w = b.constant(random_tensor(rng, Shape{2, 1, 3, 3}, -0.5f, 0.5f), "conv_w");
  ValueId conv = b.op(OpKind::Conv, {image, conv_w},
                      {{"strides", std::vector<std::int64_t>{1, 1}},
                       {"pads", std::vector<std::int64_t>{1, 1, 1, 1}}},
                      std::nullopt, "conv_out");
  ValueId relu = b.op(OpKind::Relu, {conv}, {}, std::nullopt, "relu_out");
  ValueId pool = b.op(OpKind::MaxPool, {relu},
                      {{"kernel_shape", std::vector<std::int64_t>{2, 2}},
                       {"strides", std::vector<std::int64_t>{2, 2}},
                       {"pads", std::vector<std::int64_t>{0, 0, 0, 0}}},
                      std::nullopt, "pool_out");
  ValueId target = b.constant(TensorValue::i64(Shape{2}, {1, 392}), "flat_shape");
  ValueId flat = b.op(OpKind::Reshape, {pool, target}, {}, std::nullopt, "flat");
  ValueId fc_w = b.constant(random_tensor(rng, Shape{392, 10}, -0.1f, 0.1f), "fc_w");
  ValueId mm = b.op(OpKind::MatMul, {flat, fc_w}, {}, std::nullopt, "fc_out");
  ValueId bias = b.constant(random_tensor(rng, Shape{10}, -0.1f, 0.1f), "fc_bias");
  ValueId scores = b.op(OpKind::Add, {mm, bias}, {}, std::nullopt, "scores");
  b.ret({scores});

  GraphModule m = pass_shape_inference(b.finish());
  export_model(m, out_dir);
  write_tensor_file(out_dir / "input.tensor", random_tensor(rng, Shape{1, 1, 28, 28}, 0.0f, 1.0f));
  std::cout << "wrote " << (out_dir / "model.json").string() << "\n";
  return 0;
}
