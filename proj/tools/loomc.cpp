/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===----------------------------- loomc.cpp -----------------------------===//
//
// Driver for the loom pipeline.
//
//   loomc compile model.json --emit=loop            print loop-level IR
//   loomc compile model.json --emit=plan -o m.plan  serialize for later runs
//   loomc run model.json x.tensor --verify          compile, execute, check
//
// Exit codes: 0 success, 1 compile/runtime diagnostic, 2 usage error.
// LOOMC_DEBUG=1 turns reads of never-written buffer elements into errors.
//
//===----------------------------------------------------------------------===//

#include "loom/loom.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct PassFlags {
  bool no_decompose = false;
  bool no_rewrite = false;
  bool no_constprop = false;
  std::vector<std::string> tiles;
};

void add_pass_flags(CLI::App *cmd, PassFlags &flags) {
  cmd->add_flag("--no-decompose", flags.no_decompose, "skip the op-decomposition pass");
  cmd->add_flag("--no-rewrite", flags.no_rewrite, "skip the graph-rewrite pass");
  cmd->add_flag("--no-constprop", flags.no_constprop, "skip constant propagation");
  cmd->add_option("--tile", flags.tiles,
                  "block the outermost loop of an op's nests, e.g. --tile=MatMul:2")
      ->expected(-1);
}

loom::CompileOptions to_options(const PassFlags &flags) {
  loom::CompileOptions opt;
  opt.decompose = !flags.no_decompose;
  opt.rewrite = !flags.no_rewrite;
  opt.constprop = !flags.no_constprop;
  for (const std::string &spec : flags.tiles) {
    std::size_t colon = spec.rfind(':');
    std::int64_t size = 0;
    if (colon != std::string::npos && colon > 0)
      size = std::atoll(spec.c_str() + colon + 1);
    if (colon == std::string::npos || size < 1)
      throw CLI::ValidationError("--tile expects <op-kind>:<positive size>, got '" + spec + "'");
    opt.tiles.emplace_back(spec.substr(0, colon), size);
  }
  return opt;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_output(const std::string &text, const std::string &out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(out_path);
  if (!os)
    loom::fail("IoError", "cannot write " + out_path);
  os << text;
}

int cmd_compile(const std::string &model, const std::string &emit, const std::string &out_path,
                const PassFlags &flags) {
  loom::CompileOptions options = to_options(flags);
  loom::GraphModule imported = loom::import_model(model);
  if (emit == "graph") {
    write_output(loom::print_graph(imported), out_path);
    return 0;
  }
  if (emit == "graph-opt") {
    loom::GraphModule optimized =
        loom::PassPipeline::standard(options.decompose, options.rewrite, options.constprop)
            .run(std::move(imported));
    write_output(loom::print_graph(optimized), out_path);
    return 0;
  }
  loom::CompiledModel compiled = loom::compile_module(std::move(imported), options);
  if (emit == "loop")
    write_output(loom::print_loop_module(compiled.loops), out_path);
  else if (emit == "affine")
    write_output(loom::emit_affine_text(compiled.program), out_path);
  else
    write_output(loom::plan_text(compiled.program), out_path);
  return 0;
}

bool is_plan_file(const fs::path &path) {
  if (path.extension() == ".plan")
    return true;
  std::ifstream is(path);
  std::string head(64, '\0');
  is.read(head.data(), static_cast<std::streamsize>(head.size()));
  return head.find("loom-plan") != std::string::npos;
}

int cmd_run(const std::string &model, const std::vector<std::string> &input_paths,
            const std::string &out_dir, bool verify, const PassFlags &flags) {
  loom::ExecOptions exec;
  const char *debug_env = std::getenv("LOOMC_DEBUG");
  exec.check_uninitialized_reads = debug_env && std::string(debug_env) == "1";

  std::vector<loom::TensorValue> inputs;
  for (const std::string &p : input_paths)
    inputs.push_back(loom::read_tensor_file(p));

  auto start = std::chrono::steady_clock::now();
  loom::AffineProgram program;
  std::optional<loom::GraphModule> graph;
  if (is_plan_file(model)) {
    if (verify)
      throw CLI::ValidationError("--verify needs a model manifest, not a plan file");
    program = loom::read_plan(model);
  } else {
    loom::GraphModule imported = loom::import_model(model);
    graph = loom::pass_shape_inference(imported); // reference for --verify
    program = loom::compile_module(std::move(imported), to_options(flags)).program;
  }
  double compile_seconds = seconds_since(start);

  start = std::chrono::steady_clock::now();
  std::vector<loom::TensorValue> outputs = loom::interpret(program, inputs, exec);
  double run_seconds = seconds_since(start);

  std::printf("compile: %.3f s\n", compile_seconds);
  std::printf("run: %.3f s\n", run_seconds);

  fs::path dir = out_dir.empty() ? fs::current_path() : fs::path(out_dir);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    fs::path file = dir / ("output_" + std::to_string(i) + ".tensor");
    loom::write_tensor_file(file, outputs[i]);
    std::printf("output %zu: %s -> %s\n", i, outputs[i].type().str().c_str(),
                file.string().c_str());
  }

  if (verify) {
    std::vector<loom::TensorValue> expected = loom::reference_eval(*graph, inputs);
    double max_diff = 0.0;
    double max_ref = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const auto &got = outputs[i].f32_data();
      const auto &ref = expected[i].f32_data();
      for (std::size_t j = 0; j < got.size(); ++j) {
        max_diff = std::max(max_diff, std::abs(static_cast<double>(got[j]) - ref[j]));
        max_ref = std::max(max_ref, std::abs(static_cast<double>(ref[j])));
      }
    }
    double bound = 1e-5 * (1.0 + max_ref);
    std::printf("verify: max abs diff = %.9g (bound %.9g)\n", max_diff, bound);
    if (max_diff > bound) {
      std::fprintf(stderr, "error: interpreter output deviates from the reference evaluator\n");
      return 1;
    }
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"loom: a desk-scale neural-network inference compiler"};
  app.require_subcommand(1);

  std::string model, emit = "affine", out_path, out_dir;
  std::vector<std::string> input_paths;
  bool verify = false;
  PassFlags compile_flags, run_flags;

  CLI::App *compile = app.add_subcommand("compile", "lower a model and emit one IR level");
  compile->add_option("model", model, "model manifest (model.json)")->required();
  compile->add_option("--emit", emit, "graph | graph-opt | loop | affine | plan")
      ->check(CLI::IsMember({"graph", "graph-opt", "loop", "affine", "plan"}));
  compile->add_option("-o,--output", out_path, "write here instead of stdout");
  add_pass_flags(compile, compile_flags);

  CLI::App *run = app.add_subcommand("run", "compile a model and execute it");
  run->add_option("model", model, "model manifest or compiled plan")->required();
  run->add_option("inputs", input_paths, "input payload files (*.tensor)");
  run->add_option("--out-dir", out_dir, "directory for output payloads (default: cwd)");
  run->add_flag("--verify", verify, "also run the reference evaluator and compare");
  add_pass_flags(run, run_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (compile->parsed())
      return cmd_compile(model, emit, out_path, compile_flags);
    return cmd_run(model, input_paths, out_dir, verify, run_flags);
  } catch (const CLI::ValidationError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const loom::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
