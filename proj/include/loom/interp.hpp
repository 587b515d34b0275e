/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===----------------------------- interp.hpp ----------------------------===//
//
// Reference interpreter for affine programs: executes nests in order with
// plain F32 round-to-nearest arithmetic and returns the result buffers.
// Debug mode flags reads of never-written elements; release mode documents
// them as zero-fill (fresh buffers start zeroed).
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/affine_ir.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace loom {

struct ExecOptions {
  bool check_uninitialized_reads = false;
};

struct TripCount {
  std::int64_t entries = 0;    // times the loop header was reached
  std::int64_t iterations = 0; // total body-side iterations it performed
};

namespace detail {

/// One scalar slot; arithmetic ops fill the field their dtype selects,
/// comparisons fill `i` with 0/1.
struct Cell {
  float f = 0.0f;
  std::int64_t i = 0;
};

class Interpreter {
public:
  Interpreter(const AffineProgram &program, const ExecOptions &options)
      : program_(program), options_(options), env_(static_cast<std::size_t>(program.num_ivs), 0) {}

  std::vector<TensorValue> run(std::span<const TensorValue> inputs) {
    bind(inputs);
    for (const AffineNest &nest : program_.nests)
      run_loop(nest, 0);
    std::vector<TensorValue> out;
    for (std::int32_t r : program_.results)
      out.push_back(storage_[static_cast<std::size_t>(r)]);
    return out;
  }

  std::map<std::int32_t, TripCount> count_trips() {
    // structural walk only; bodies are skipped
    counting_ = true;
    for (const AffineNest &nest : program_.nests)
      run_loop(nest, 0);
    return counts_;
  }

private:
  void bind(std::span<const TensorValue> inputs) {
    std::size_t num_inputs = 0;
    for (const BufferDecl &b : program_.buffers)
      if (b.is_input)
        ++num_inputs;
    if (inputs.size() != num_inputs)
      fail("ArityMismatch", "program expects " + std::to_string(num_inputs) + " inputs, got " +
                                std::to_string(inputs.size()));
    std::size_t next_input = 0;
    for (const BufferDecl &b : program_.buffers) {
      if (b.is_input) {
        const TensorValue &in = inputs[next_input++];
        if (in.type() != b.type)
          fail("TypeMismatch", "input " + std::to_string(next_input - 1) + " has type " +
                                   in.type().str() + ", expected " + b.type.str());
        storage_.push_back(in);
      } else if (b.init) {
        storage_.push_back(*b.init);
      } else {
        storage_.push_back(TensorValue::zeros(b.type.dtype, b.type.shape));
      }
      bool prewritten = b.is_input || b.init.has_value();
      written_.emplace_back(static_cast<std::size_t>(b.type.shape.elem_count()), prewritten);
    }
  }

  void run_loop(const AffineNest &nest, std::size_t depth) {
    if (depth == nest.loops.size()) {
      if (!counting_)
        run_body(nest.body);
      return;
    }
    const AffineFor &loop = nest.loops[depth];
    std::int64_t lo = loop.lower.eval(env_);
    std::int64_t hi = loop.upper.front().eval(env_);
    for (std::size_t i = 1; i < loop.upper.size(); ++i)
      hi = std::min(hi, loop.upper[i].eval(env_));
    if (counting_)
      ++counts_[loop.iv].entries;
    for (std::int64_t v = lo; v < hi; v += loop.step) {
      env_[static_cast<std::size_t>(loop.iv)] = v;
      if (counting_)
        ++counts_[loop.iv].iterations;
      run_loop(nest, depth + 1);
    }
  }

  std::int64_t offset_of(const ScalarOp &op) {
    const BufferDecl &buf = program_.buffers[static_cast<std::size_t>(op.buffer)];
    if (static_cast<int>(op.indices.size()) == buf.type.shape.rank()) {
      std::vector<std::int64_t> idx;
      idx.reserve(op.indices.size());
      for (const AffineExpr &e : op.indices)
        idx.push_back(e.eval(env_));
      return linear_index(buf.type.shape, idx);
    }
    // single-expression flat addressing
    std::int64_t flat = op.indices.front().eval(env_);
    if (flat < 0 || flat >= buf.type.shape.elem_count())
      fail("OutOfRange", "flat offset " + std::to_string(flat) + " out of range for buffer '" +
                             buf.name + "'");
    return flat;
  }

  Cell operand(const std::vector<Cell> &cells, const ScalarOperand &a) const {
    if (a.tag == ScalarOperand::Expr) {
      Cell c;
      c.i = a.expr.eval(env_);
      c.f = static_cast<float>(c.i);
      return c;
    }
    return cells[static_cast<std::size_t>(a.value)];
  }

  void run_body(const std::vector<ScalarOp> &body) {
    std::vector<Cell> cells(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
      const ScalarOp &op = body[i];
      Cell out;
      switch (op.kind) {
      case ScalarKind::Load: {
        std::int64_t off = offset_of(op);
        auto &flags = written_[static_cast<std::size_t>(op.buffer)];
        if (options_.check_uninitialized_reads && !flags[static_cast<std::size_t>(off)])
          fail("UninitializedRead",
               "read of element " + std::to_string(off) + " of buffer '" +
                   program_.buffers[static_cast<std::size_t>(op.buffer)].name +
                   "' before any write");
        const TensorValue &t = storage_[static_cast<std::size_t>(op.buffer)];
        if (t.dtype() == DType::F32)
          out.f = t.f32_data()[static_cast<std::size_t>(off)];
        else
          out.i = t.i64_data()[static_cast<std::size_t>(off)];
        break;
      }
      case ScalarKind::Store: {
        std::int64_t off = offset_of(op);
        Cell v = operand(cells, op.args[0]);
        TensorValue &t = storage_[static_cast<std::size_t>(op.buffer)];
        if (t.dtype() == DType::F32)
          t.f32_data()[static_cast<std::size_t>(off)] = v.f;
        else
          t.i64_data()[static_cast<std::size_t>(off)] = v.i;
        written_[static_cast<std::size_t>(op.buffer)][static_cast<std::size_t>(off)] = true;
        break;
      }
      case ScalarKind::ConstF:
        out.f = op.fval;
        break;
      case ScalarKind::ConstI:
        out.i = op.ival;
        break;
      case ScalarKind::Abs: {
        Cell a = operand(cells, op.args[0]);
        if (op.dtype == DType::F32)
          out.f = std::fabs(a.f);
        else
          out.i = a.i < 0 ? -a.i : a.i;
        break;
      }
      case ScalarKind::Exp: {
        Cell a = operand(cells, op.args[0]);
        out.f = std::exp(a.f);
        break;
      }
      case ScalarKind::Add:
      case ScalarKind::Sub:
      case ScalarKind::Mul:
      case ScalarKind::Div:
      case ScalarKind::Max: {
        Cell a = operand(cells, op.args[0]);
        Cell b = operand(cells, op.args[1]);
        if (op.dtype == DType::F32) {
          switch (op.kind) {
          case ScalarKind::Add:
            out.f = a.f + b.f;
            break;
          case ScalarKind::Sub:
            out.f = a.f - b.f;
            break;
          case ScalarKind::Mul:
            out.f = a.f * b.f;
            break;
          case ScalarKind::Div:
            out.f = a.f / b.f;
            break;
          default:
            out.f = std::max(a.f, b.f);
          }
        } else {
          switch (op.kind) {
          case ScalarKind::Add:
            out.i = a.i + b.i;
            break;
          case ScalarKind::Sub:
            out.i = a.i - b.i;
            break;
          case ScalarKind::Mul:
            out.i = a.i * b.i;
            break;
          case ScalarKind::Div:
            out.i = b.i == 0 ? 0 : a.i / b.i;
            break;
          default:
            out.i = std::max(a.i, b.i);
          }
        }
        break;
      }
      case ScalarKind::CmpGe: {
        Cell a = operand(cells, op.args[0]);
        Cell b = operand(cells, op.args[1]);
        out.i = op.dtype == DType::F32 ? (a.f >= b.f ? 1 : 0) : (a.i >= b.i ? 1 : 0);
        break;
      }
      case ScalarKind::Select: {
        Cell c = operand(cells, op.args[0]);
        Cell a = operand(cells, op.args[1]);
        Cell b = operand(cells, op.args[2]);
        out = c.i != 0 ? a : b;
        break;
      }
      }
      cells[i] = out;
    }
  }

  const AffineProgram &program_;
  ExecOptions options_;
  std::vector<std::int64_t> env_;
  std::vector<TensorValue> storage_;
  std::vector<std::vector<bool>> written_;
  std::map<std::int32_t, TripCount> counts_;
  bool counting_ = false;
};

} // namespace detail

/// Runs the program on `inputs`; deterministic (identical inputs give
/// bit-identical outputs).
inline std::vector<TensorValue> interpret(const AffineProgram &program,
                                          std::span<const TensorValue> inputs,
                                          const ExecOptions &options = {}) {
  detail::Interpreter interp(program, options);
  return interp.run(inputs);
}

/// Trip counts per materialized loop (keyed by induction-variable id):
/// how often the loop was entered and how many iterations it ran in total.
/// Bounds are walked structurally; bodies never execute.
inline std::map<std::int32_t, TripCount> trip_count_report(const AffineProgram &program) {
  detail::Interpreter interp(program, {});
  return interp.count_trips();
}

} // namespace loom
