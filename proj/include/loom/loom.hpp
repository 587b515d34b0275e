/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===------------------------------ loom.hpp -----------------------------===//
//
// Umbrella header for the whole pipeline.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/affine_ir.hpp"
#include "loom/affine_print.hpp"
#include "loom/graph.hpp"
#include "loom/graph_eval.hpp"
#include "loom/graph_parse.hpp"
#include "loom/graph_print.hpp"
#include "loom/import.hpp"
#include "loom/interp.hpp"
#include "loom/loop_ir.hpp"
#include "loom/loop_print.hpp"
#include "loom/lower_graph.hpp"
#include "loom/passes.hpp"
#include "loom/payload.hpp"
#include "loom/pipeline.hpp"
#include "loom/plan.hpp"
#include "loom/shape_infer.hpp"
#include "loom/support.hpp"
#include "loom/tensor.hpp"
