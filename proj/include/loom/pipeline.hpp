/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===---------------------------- pipeline.hpp ---------------------------===//
//
// End-to-end driver: graph passes, loop lowering, tiling requests, affine
// expansion. The CLI and the test suites all go through this.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/affine_ir.hpp"
#include "loom/graph.hpp"
#include "loom/interp.hpp"
#include "loom/lower_graph.hpp"
#include "loom/passes.hpp"

#include <string>
#include <utility>
#include <vector>

namespace loom {

struct CompileOptions {
  bool decompose = true;
  bool rewrite = true;
  bool constprop = true;
  /// op kind name -> tile size; blocks the outermost non-reduction loop of
  /// every compute nest emitted for that kind.
  std::vector<std::pair<std::string, std::int64_t>> tiles;
};

/// Blocks the outermost schedulable loop of every compute iterate tagged
/// with `kind`. Returns how many nests were tiled.
inline int apply_tile(LoopModule &m, const std::string &kind, std::int64_t size) {
  int tiled = 0;
  for (IterateOp &it : m.fn.iterates) {
    if (it.tag != kind || it.num_schedulable < 1)
      continue;
    block(m.fn, it, LoopHandle{it.scheduled.front()}, size);
    ++tiled;
  }
  return tiled;
}

struct CompiledModel {
  GraphModule optimized;
  LoopModule loops;
  AffineProgram program;
};

inline CompiledModel compile_module(GraphModule module, const CompileOptions &options = {}) {
  CompiledModel out;
  out.optimized =
      PassPipeline::standard(options.decompose, options.rewrite, options.constprop)
          .run(std::move(module));
  out.loops = lower_graph_to_loops(out.optimized);
  for (const auto &[kind, size] : options.tiles)
    if (apply_tile(out.loops, kind, size) == 0)
      fail("UnknownTileTarget", "no " + kind + " nest to tile in this model");
  verify_loop_module_or_throw(out.loops, "after tiling");
  out.program = lower_loops_to_affine(out.loops);
  return out;
}

/// compile + interpret in one step.
inline std::vector<TensorValue> run_module(GraphModule module, std::span<const TensorValue> inputs,
                                           const CompileOptions &options = {},
                                           const ExecOptions &exec = {}) {
  CompiledModel compiled = compile_module(std::move(module), options);
  return interpret(compiled.program, inputs, exec);
}

} // namespace loom
