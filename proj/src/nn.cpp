// SPDX-License-Identifier: Apache-2.0
#include "ld3m/nn.hpp"

#include <cmath>

#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

namespace ld3m {

Var activate(Activation act, const Var& x) {
  switch (act) {
    case Activation::relu: return ad::relu(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::none: return x;
  }
  return x;
}

void init_dense(Rng& rng, std::size_t fan_in, Activation act, Array& weight, Array& bias) {
  const double gain = act == Activation::relu ? std::sqrt(2.0) : 1.0;
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (auto& w : weight.data()) w = rng.uniform(-bound, bound);
  const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& b : bias.data()) b = rng.uniform(-bb, bb);
}

Mlp::Mlp(std::vector<std::size_t> widths, Activation act, Rng& rng) : widths_(std::move(widths)), act_(act) {
  if (widths_.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    Array W(Shape{widths_[i + 1], widths_[i]});
    Array b(Shape{widths_[i + 1]});
    init_dense(rng, widths_[i], act_, W, b);
    params_.emplace_back(std::move(W), true);
    params_.emplace_back(std::move(b), true);
  }
}

Var Mlp::forward_with(std::span<const Var> params, const Var& x) const {
  if (params.size() != params_.size()) throw ContractError("Mlp: wrong parameter count");
  Var h = x;
  const std::size_t layers = num_layers();
  for (std::size_t i = 0; i < layers; ++i) {
    h = ad::affine(h, params[2 * i], params[2 * i + 1]);
    if (i + 1 < layers) h = activate(act_, h);
  }
  return h;
}

Var Mlp::penultimate_with(std::span<const Var> params, const Var& x) const {
  if (params.size() != params_.size()) throw ContractError("Mlp: wrong parameter count");
  Var h = x;
  const std::size_t layers = num_layers();
  for (std::size_t i = 0; i + 1 < layers; ++i) {
    h = activate(act_, ad::affine(h, params[2 * i], params[2 * i + 1]));
  }
  return h;
}

void Mlp::set_trainable(bool trainable) { ld3m::set_trainable(params_, trainable); }

bool Mlp::trainable() const { return !params_.empty() && params_.front().requires_grad(); }

std::vector<Array> Mlp::snapshot() const { return values_of(params_); }

void Mlp::load(const std::vector<Array>& values) {
  if (values.size() != params_.size()) throw ContractError("Mlp::load: wrong parameter count");
  const bool rg = trainable();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i].shape()) throw DimensionError("Mlp::load: parameter shape mismatch");
    params_[i] = Var(values[i], rg);
  }
}

void set_trainable(std::vector<Var>& params, bool trainable) {
  for (auto& p : params) {
    if (p.requires_grad() != trainable) p = Var(p.value(), trainable);
  }
}

std::vector<Array> values_of(std::span<const Var> params) {
  std::vector<Array> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

void Adam::step(std::span<Var> params, std::span<const Var> grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.shape(), 0.0);
      v_.emplace_back(p.shape(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_value().data();
    const auto g = grads[i].value().data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
      v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Sgd::step(std::span<Var> params, std::span<const Var> grads) {
  if (v_.empty()) {
    for (const auto& p : params) v_.emplace_back(p.shape(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_value().data();
    const auto g = grads[i].value().data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mu_ * v[j] + g[j];
      p[j] -= lr_ * v[j];
    }
  }
}

}  // namespace ld3m
