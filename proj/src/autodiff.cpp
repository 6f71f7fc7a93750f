// SPDX-License-Identifier: Apache-2.0
#include "ld3m/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

namespace ld3m::ad {
namespace {

thread_local bool t_grad_enabled = true;
thread_local std::size_t t_live = 0;
thread_local std::size_t t_peak = 0;
// Set while a first-order backward pass builds gradient buffers.
thread_local bool t_in_gradient = false;
thread_local std::vector<std::shared_ptr<GraphSegment>> t_segments;
std::atomic<std::uint64_t> g_next_id{1};

// Reverse topological order (root first) over nodes that require grad.
std::vector<Node*> topo_from(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].node().get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(n);
    stack.pop_back();
  }
  std::reverse(order.begin(), order.end());
  return order;
}

Var accumulate(const Var& existing, const Var& incoming) {
  if (!existing.defined()) return incoming;
  if (existing.shape() != incoming.shape()) {
    throw DimensionError("gradient shape mismatch " + shape_str(existing.shape()) + " vs " +
                         shape_str(incoming.shape()));
  }
  return add(existing, incoming);
}

// Core engine. With `inputs` empty, gradients land in leaf .grad fields;
// otherwise only paths leading to an input are visited and the input
// gradients are returned.
std::vector<Var> run_backward(const Var& root, const Var& seed, std::span<const Var> inputs,
                              bool create_graph) {
  if (!root.requires_grad()) {
    throw ContractError("backward root is not reachable from any requires_grad node");
  }
  GradMode mode(create_graph);
  const bool saved_in_gradient = t_in_gradient;
  t_in_gradient = !create_graph;
  struct Restore {
    bool v;
    ~Restore() { t_in_gradient = v; }
  } restore{saved_in_gradient};
  const auto order = topo_from(root.node().get());

  const bool to_inputs = !inputs.empty();
  std::unordered_map<Node*, std::size_t> input_index;
  for (std::size_t i = 0; i < inputs.size(); ++i) input_index.emplace(inputs[i].node().get(), i);

  // needed[n]: n lies on a path toward something that receives a gradient.
  std::unordered_map<Node*, bool> needed;
  needed.reserve(order.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    bool need = to_inputs ? input_index.count(n) > 0 : n->parents.empty();
    for (const auto& p : n->parents) {
      if (need) break;
      auto f = needed.find(p.node().get());
      need = f != needed.end() && f->second;
    }
    needed[n] = need;
  }

  std::vector<Var> result(inputs.size());
  std::unordered_map<Node*, Var> grads;
  grads[root.node().get()] = seed;

  for (Node* n : order) {
    auto git = grads.find(n);
    if (git == grads.end()) continue;
    Var g = std::move(git->second);
    grads.erase(git);

    if (to_inputs) {
      if (auto f = input_index.find(n); f != input_index.end()) result[f->second] = g;
    } else if (n->parents.empty()) {
      if (n->grad) {
        auto acc = n->grad->data();
        const auto add_from = g.value().data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add_from[i];
      } else {
        n->grad = g.value();
      }
    }
    if (n->parents.empty() || !n->backward) continue;

    std::vector<bool> need(n->parents.size());
    bool any = false;
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      Node* p = n->parents[i].node().get();
      auto f = needed.find(p);
      need[i] = p->requires_grad && f != needed.end() && f->second;
      any = any || need[i];
    }
    if (!any) continue;
    auto outs = n->backward(g, need);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      if (!need[i] || !outs[i].defined()) continue;
      Node* p = n->parents[i].node().get();
      grads[p] = accumulate(grads[p], outs[i]);
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!result[i].defined()) result[i] = zeros(inputs[i].shape());
  }
  return result;
}

}  // namespace

Node::Node(Array v, bool rg, bool act)
    : value(std::move(v)), requires_grad(rg), activation(act), id(g_next_id.fetch_add(1)) {
  if (activation) {
    t_live += value.size();
    t_peak = std::max(t_peak, t_live);
  }
}

Node::~Node() {
  if (activation) t_live -= value.size();
}

Var::Var(Array value, bool requires_grad)
    : node_(std::make_shared<Node>(std::move(value), requires_grad, false)) {}

Array& Var::mutable_value() {
  if (!is_leaf()) throw ContractError("mutable_value() on a non-leaf variable");
  return node_->value;
}

bool grad_enabled() { return t_grad_enabled; }

GradMode::GradMode(bool enabled) : saved_(t_grad_enabled) { t_grad_enabled = enabled; }
GradMode::~GradMode() { t_grad_enabled = saved_; }

Var make_op(Array value, std::vector<Var> parents, BackwardFn backward, const char* name) {
  const bool record = t_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                    [](const Var& p) { return p.requires_grad(); });
  Var out;
  out.node_ = std::make_shared<Node>(std::move(value), record, !t_in_gradient);
  out.node_->op = name;
  if (record) {
    out.node_->parents = std::move(parents);
    out.node_->backward = std::move(backward);
  }
  return out;
}

void backward(const Var& root, bool create_graph) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("backward requires a scalar root");
  }
  run_backward(root, constant(Array(root.shape(), 1.0)), {}, create_graph);
}

std::vector<Var> grad(const Var& root, std::span<const Var> inputs, bool create_graph) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("grad requires a scalar root");
  }
  if (inputs.empty()) return {};
  if (!root.requires_grad()) {
    std::vector<Var> out;
    for (const auto& in : inputs) out.push_back(zeros(in.shape()));
    return out;
  }
  return run_backward(root, constant(Array(root.shape(), 1.0)), inputs, create_graph);
}

std::vector<Var> vjp(const Var& output, const Var& cotangent, std::span<const Var> inputs,
                     bool create_graph) {
  if (output.shape() != cotangent.shape()) {
    throw DimensionError("vjp cotangent shape " + shape_str(cotangent.shape()) +
                         " does not match output " + shape_str(output.shape()));
  }
  if (inputs.empty()) return {};
  if (!output.requires_grad()) {
    std::vector<Var> out;
    for (const auto& in : inputs) out.push_back(zeros(in.shape()));
    return out;
  }
  return run_backward(output, cotangent, inputs, create_graph);
}

std::size_t ActivationMeter::live() { return t_live; }
std::size_t ActivationMeter::peak() { return t_peak; }
void ActivationMeter::reset_peak() { t_peak = t_live; }

const std::vector<std::shared_ptr<GraphSegment>>& segment_log() { return t_segments; }
void reset_segment_log() { t_segments.clear(); }

Var checkpoint(const std::vector<Var>& inputs, SegmentFn run, const std::string& name) {
  auto seg = std::make_shared<GraphSegment>();
  seg->name = name;
  for (const auto& in : inputs) seg->inputs.push_back(in.id());
  const bool replayable =
      t_grad_enabled &&
      std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  seg->replayable = replayable;

  Array forward_value;
  {
    NoGrad no_grad;
    std::vector<Var> detached;
    detached.reserve(inputs.size());
    for (const auto& in : inputs) detached.push_back(in.detach());
    forward_value = run(detached).value();
  }

  // Reads the output's stored value at replay time without a reference cycle.
  auto self = std::make_shared<std::weak_ptr<Node>>();
  BackwardFn fn = [inputs, run, seg, self](const Var& g, const std::vector<bool>& need) {
    if (grad_enabled()) {
      throw ContractError("checkpointed segment '" + seg->name +
                          "' does not support higher-order gradients");
    }
    ++seg->replays;
    GradMode on(true);
    std::vector<Var> leaves;
    std::vector<Var> wanted;
    leaves.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      leaves.emplace_back(inputs[i].value(), static_cast<bool>(need[i]));
      if (need[i]) wanted.push_back(leaves.back());
    }
    Var replay;
    {
      // The recomputed forward values are activations again.
      const bool saved = t_in_gradient;
      t_in_gradient = false;
      replay = run(leaves);
      t_in_gradient = saved;
    }
    if (auto stored = self->lock()) {
      const Array& a = stored->value;
      const Array& b = replay.value();
      if (a.shape() != b.shape()) throw ReplayError("segment '" + seg->name + "' changed shape on replay");
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i] - b[i]) > 1e-12 * (1.0 + std::abs(a[i]))) {
          throw ReplayError("segment '" + seg->name + "' is nondeterministic: replay differs by " +
                            std::to_string(std::abs(a[i] - b[i])));
        }
      }
    }
    auto local = vjp(replay, g, wanted, false);
    std::vector<Var> out(inputs.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (need[i]) out[i] = constant(local[k++].value());
    }
    return out;
  };

  Var out = make_op(std::move(forward_value), inputs, std::move(fn), "checkpoint");
  *self = out.node();
  seg->outputs.push_back(out.id());
  t_segments.push_back(seg);
  return out;
}

}  // namespace ld3m::ad
