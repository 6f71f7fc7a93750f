// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ld3m/autodiff.hpp"
#include "ld3m/rng.hpp"

namespace ld3m {

using ad::Var;

enum class Activation { none, relu, tanh };

Var activate(Activation act, const Var& x);

/// Fully connected stack with `act` after every layer except the last.
/// Parameters are stored as [W0, b0, W1, b1, ...] with W_i of shape out x in.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> widths, Activation act, Rng& rng);

  Var forward(const Var& x) const { return forward_with(params_, x); }
  Var forward_with(std::span<const Var> params, const Var& x) const;
  // Output of the last hidden layer (after activation); the input itself for
  // single-layer nets.
  Var penultimate_with(std::span<const Var> params, const Var& x) const;

  const std::vector<Var>& parameters() const { return params_; }
  std::vector<Var>& parameters() { return params_; }
  void set_trainable(bool trainable);
  bool trainable() const;

  std::size_t in_dim() const { return widths_.front(); }
  std::size_t out_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return act_; }

  std::vector<Array> snapshot() const;
  void load(const std::vector<Array>& values);

 private:
  std::vector<std::size_t> widths_;
  Activation act_ = Activation::tanh;
  std::vector<Var> params_;
};

// Kaiming-uniform fan-in initialisation; gain sqrt(2) for relu nets, 1 otherwise.
void init_dense(Rng& rng, std::size_t fan_in, Activation act, Array& weight, Array& bias);

void set_trainable(std::vector<Var>& params, bool trainable);
std::vector<Array> values_of(std::span<const Var> params);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::span<Var> params, std::span<const Var> grads);

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Array> m_, v_;
};

/// SGD with heavy-ball momentum: v <- mu v + g; p <- p - lr v.
class Sgd {
 public:
  explicit Sgd(double lr, double momentum = 0.0) : lr_(lr), mu_(momentum) {}
  void step(std::span<Var> params, std::span<const Var> grads);
  const std::vector<Array>& velocity() const { return v_; }

 private:
  double lr_, mu_;
  std::vector<Array> v_;
};

}  // namespace ld3m
