// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dynamic reverse-mode differentiation over Array values.
//
// Every op records its parents and a backward closure. Backward closures are
// themselves written with Var ops, so running the engine with create_graph
// set yields gradients that can be differentiated again (needed by gradient
// matching and unrolled inner loops). Graphs are rebuilt on every forward
// pass and owned by the Vars that reference them.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ld3m/array.hpp"

namespace ld3m::ad {

class Var;

// Called with the output gradient and a mask of which parents need one.
// Returns one entry per parent; entries for unneeded parents may be undefined.
using BackwardFn = std::function<std::vector<Var>(const Var& grad_out, const std::vector<bool>& need)>;

struct Node {
  Array value;
  bool requires_grad = false;
  bool activation = false;  // produced by an op, counted by ActivationMeter
  std::vector<Var> parents;
  BackwardFn backward;
  std::optional<Array> grad;
  std::uint64_t id = 0;
  const char* op = "leaf";

  Node(Array v, bool rg, bool act);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
};

class Var {
 public:
  Var() = default;
  explicit Var(Array value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Array& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::uint64_t id() const { return node_->id; }
  bool is_leaf() const { return node_->parents.empty(); }

  // Gradient accumulated by backward(); absent until a pass touches the node.
  const std::optional<Array>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.reset(); }

  // In-place value update for leaves (optimizer steps). Not recorded.
  Array& mutable_value();

  Var detach() const { return Var(node_->value, false); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_op(Array, std::vector<Var>, BackwardFn, const char*);
  std::shared_ptr<Node> node_;
};

// Grad recording is a per-thread mode; graphs never cross threads.
bool grad_enabled();

class GradMode {
 public:
  explicit GradMode(bool enabled);
  ~GradMode();
  GradMode(const GradMode&) = delete;
  GradMode& operator=(const GradMode&) = delete;

 private:
  bool saved_;
};

struct NoGrad : GradMode {
  NoGrad() : GradMode(false) {}
};

// Builds an op node. Parents are retained only when recording and at least
// one parent requires a gradient; otherwise the result is a constant.
Var make_op(Array value, std::vector<Var> parents, BackwardFn backward, const char* name);

/// Accumulates d(root)/d(leaf) into every requires_grad leaf reachable from root.
void backward(const Var& root, bool create_graph = false);

/// Returns d(root)/d(input) for each input without touching leaf .grad fields.
/// Inputs may be interior nodes. Unreached inputs get zeros.
std::vector<Var> grad(const Var& root, std::span<const Var> inputs, bool create_graph = false);

/// Vector-Jacobian product: sum_i <cotangent_i, d output_i / d input> for non-scalar output.
std::vector<Var> vjp(const Var& output, const Var& cotangent, std::span<const Var> inputs,
                     bool create_graph = false);

// ---------------------------------------------------------------------------
// Instrumentation
// ---------------------------------------------------------------------------

// Tracks the number of doubles held by live op outputs (not leaves) on this
// thread: forward values, including checkpoint replays. Gradient buffers of a
// first-order backward pass are not counted. reset_peak() clears the peak to
// the current live count.
struct ActivationMeter {
  static std::size_t live();
  static std::size_t peak();
  static void reset_peak();
};

// ---------------------------------------------------------------------------
// Checkpointed segments
// ---------------------------------------------------------------------------

struct GraphSegment {
  std::string name;
  std::vector<std::uint64_t> inputs;
  std::vector<std::uint64_t> outputs;
  bool replayable = true;
  std::size_t replays = 0;
};

using SegmentFn = std::function<Var(const std::vector<Var>&)>;

/// Runs `run` without retaining its interior activations. During backward the
/// segment is replayed from its inputs and differentiated locally. `run` must
/// be deterministic given its inputs (capture any RNG substate by value).
Var checkpoint(const std::vector<Var>& inputs, SegmentFn run, const std::string& name = "segment");

// Segments created on this thread since the last reset, in creation order.
const std::vector<std::shared_ptr<GraphSegment>>& segment_log();
void reset_segment_log();

}  // namespace ld3m::ad
