// SPDX-License-Identifier: Apache-2.0
#include "ld3m/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "ld3m/errors.hpp"
#include "ld3m/kernels.hpp"

namespace ld3m::ad {
namespace {

using kernels::Binary;
using kernels::Unary;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

Array map_unary(Unary op, const Array& x) {
  Array out(x.shape());
  kernels::unary(op, x.data(), out.data());
  return out;
}

Array map_binary(Binary op, const Array& a, const Array& b) {
  Array out(a.shape());
  kernels::binary(op, a.data(), b.data(), out.data());
  return out;
}

using Index = std::shared_ptr<const std::vector<std::size_t>>;

Index share(std::span<const std::size_t> idx) {
  return std::make_shared<const std::vector<std::size_t>>(idx.begin(), idx.end());
}

}  // namespace

Var constant(Array a) { return Var(std::move(a), false); }
Var zeros(const Shape& shape) { return constant(Array(shape, 0.0)); }

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(map_binary(Binary::add, a.value(), b.value()), {a, b},
                 [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{g, g}; }, "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(map_binary(Binary::sub, a.value(), b.value()), {a, b},
                 [](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{g, need[1] ? neg(g) : Var()};
                 },
                 "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_op(map_binary(Binary::mul, a.value(), b.value()), {a, b},
                 [a, b](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? mul(g, b) : Var(), need[1] ? mul(g, a) : Var()};
                 },
                 "mul");
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return make_op(map_binary(Binary::div, a.value(), b.value()), {a, b},
                 [a, b](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? div(g, b) : Var(),
                                           need[1] ? neg(mul(g, div(a, square(b)))) : Var()};
                 },
                 "div");
}

Var scale(const Var& a, double k) {
  Array out(a.shape());
  const auto x = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = k * x[i];
  return make_op(std::move(out), {a},
                 [k](const Var& g, const std::vector<bool>&) { return std::vector<Var>{scale(g, k)}; },
                 "scale");
}

Var add_scalar(const Var& a, double k) {
  Array out = a.value();
  for (auto& v : out.data()) v += k;
  return make_op(std::move(out), {a},
                 [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{g}; }, "add_scalar");
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& x) {
  return make_op(map_unary(Unary::relu, x.value()), {x},
                 [x](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{mul(g, constant(map_unary(Unary::relu_mask, x.value())))};
                 },
                 "relu");
}

Var tanh(const Var& x) {
  return make_op(map_unary(Unary::tanh, x.value()), {x},
                 [x](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{mul(g, add_scalar(neg(square(tanh(x))), 1.0))};
                 },
                 "tanh");
}

Var exp(const Var& x) {
  return make_op(map_unary(Unary::exp, x.value()), {x},
                 [x](const Var& g, const std::vector<bool>&) { return std::vector<Var>{mul(g, exp(x))}; },
                 "exp");
}

Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  }
  return make_op(map_unary(Unary::log, x.value()), {x},
                 [x](const Var& g, const std::vector<bool>&) { return std::vector<Var>{div(g, x)}; },
                 "log");
}

Var sqrt(const Var& x) {
  for (double v : x.value().data()) {
    if (v < 0.0) throw DomainError("sqrt of negative value");
  }
  return make_op(map_unary(Unary::sqrt, x.value()), {x},
                 [x](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{div(g, scale(sqrt(x), 2.0))};
                 },
                 "sqrt");
}

Var square(const Var& x) {
  return make_op(map_unary(Unary::square, x.value()), {x},
                 [x](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{mul(g, scale(x, 2.0))};
                 },
                 "square");
}

Var elementwise(Elementwise kind, std::span<const Var> args, double k) {
  const std::size_t arity = (kind == Elementwise::add || kind == Elementwise::mul) ? 2 : 1;
  if (args.size() != arity) {
    throw ContractError("elementwise: expected " + std::to_string(arity) + " operands, got " +
                        std::to_string(args.size()));
  }
  switch (kind) {
    case Elementwise::relu: return relu(args[0]);
    case Elementwise::tanh: return tanh(args[0]);
    case Elementwise::add: return add(args[0], args[1]);
    case Elementwise::mul: return mul(args[0], args[1]);
    case Elementwise::scale: return scale(args[0], k);
  }
  throw ContractError("elementwise: unknown kind");
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  kernels::GemmDims d{};
  d.trans_a = trans_a;
  d.trans_b = trans_b;
  d.m = trans_a ? as[1] : as[0];
  d.k = trans_a ? as[0] : as[1];
  const std::size_t kb = trans_b ? bs[1] : bs[0];
  d.n = trans_b ? bs[0] : bs[1];
  if (kb != d.k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(as) + (trans_a ? "^T" : "") +
                         " * " + shape_str(bs) + (trans_b ? "^T" : ""));
  }
  Array out(Shape{d.m, d.n});
  kernels::gemm(d, a.value().data(), b.value().data(), out.data());
  return make_op(std::move(out), {a, b},
                 [a, b, trans_a, trans_b](const Var& g, const std::vector<bool>& need) {
                   Var ga, gb;
                   if (!trans_a && !trans_b) {
                     if (need[0]) ga = matmul(g, b, false, true);
                     if (need[1]) gb = matmul(a, g, true, false);
                   } else if (!trans_a && trans_b) {
                     if (need[0]) ga = matmul(g, b, false, false);
                     if (need[1]) gb = matmul(g, a, true, false);
                   } else if (trans_a && !trans_b) {
                     if (need[0]) ga = matmul(b, g, false, true);
                     if (need[1]) gb = matmul(a, g, false, false);
                   } else {
                     if (need[0]) ga = matmul(b, g, true, true);
                     if (need[1]) gb = matmul(g, a, true, true);
                   }
                   return std::vector<Var>{ga, gb};
                 },
                 "matmul");
}

Var affine(const Var& x, const Var& W, const Var& b) {
  require_rank(W, 2, "affine");
  const std::size_t m = W.shape()[0];
  const std::size_t n = W.shape()[1];
  if (b.shape() != Shape{m}) {
    throw DimensionError("affine: bias " + shape_str(b.shape()) + " does not match weight " +
                         shape_str(W.shape()));
  }
  const auto& xs = x.shape();
  if (xs.size() == 1) {
    if (xs[0] != n) throw DimensionError("affine: input " + shape_str(xs) + " vs weight " + shape_str(W.shape()));
    return reshape(add_rowvec(matmul(reshape(x, {1, n}), W, false, true), b), {m});
  }
  if (xs.size() != 2 || xs[1] != n) {
    throw DimensionError("affine: input " + shape_str(xs) + " vs weight " + shape_str(W.shape()));
  }
  return add_rowvec(matmul(x, W, false, true), b);
}

Var add_rowvec(const Var& X, const Var& v) {
  require_rank(X, 2, "add_rowvec");
  const std::size_t rows = X.shape()[0];
  const std::size_t cols = X.shape()[1];
  if (v.shape() != Shape{cols}) throw DimensionError("add_rowvec: " + shape_str(v.shape()) + " vs " + shape_str(X.shape()));
  Array out = X.value();
  const auto vv = v.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += vv[c];
  }
  return make_op(std::move(out), {X, v},
                 [](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{g, need[1] ? sum_rows(g) : Var()};
                 },
                 "add_rowvec");
}

Var broadcast_rows(const Var& v, std::size_t rows) {
  require_rank(v, 1, "broadcast_rows");
  const std::size_t cols = v.shape()[0];
  Array out(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = v.value()[c];
  }
  return make_op(std::move(out), {v},
                 [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{sum_rows(g)}; },
                 "broadcast_rows");
}

Var broadcast_cols(const Var& v, std::size_t cols) {
  require_rank(v, 1, "broadcast_cols");
  const std::size_t rows = v.shape()[0];
  Array out(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = v.value()[r];
  }
  return make_op(std::move(out), {v},
                 [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{row_sum(g)}; },
                 "broadcast_cols");
}

Var broadcast_scalar(const Var& s, const Shape& shape) {
  if (s.size() != 1) throw DimensionError("broadcast_scalar: operand is not a scalar");
  const Shape s_shape = s.shape();
  return make_op(Array(shape, s.item()), {s},
                 [s_shape](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{reshape(sum(g), s_shape)};
                 },
                 "broadcast_scalar");
}

Var sum_rows(const Var& X) {
  require_rank(X, 2, "sum_rows");
  const std::size_t rows = X.shape()[0];
  const std::size_t cols = X.shape()[1];
  Array out(Shape{cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += X.value().at(r, c);
  }
  return make_op(std::move(out), {X},
                 [rows](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{broadcast_rows(g, rows)};
                 },
                 "sum_rows");
}

Var row_sum(const Var& X) {
  require_rank(X, 2, "row_sum");
  const std::size_t rows = X.shape()[0];
  const std::size_t cols = X.shape()[1];
  Array out(Shape{rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += X.value().at(r, c);
    out[r] = s;
  }
  return make_op(std::move(out), {X},
                 [cols](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{broadcast_cols(g, cols)};
                 },
                 "row_sum");
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const Shape shape = x.shape();
  return make_op(Array::scalar(s), {x},
                 [shape](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{broadcast_scalar(g, shape)};
                 },
                 "sum");
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

Var log_softmax_rows(const Var& X) {
  require_rank(X, 2, "log_softmax_rows");
  const std::size_t rows = X.shape()[0];
  const std::size_t cols = X.shape()[1];
  Array out(X.shape());
  kernels::log_softmax_rows(rows, cols, X.value().data(), out.data());
  return make_op(std::move(out), {X},
                 [X, cols](const Var& g, const std::vector<bool>&) {
                   Var softmax = exp(log_softmax_rows(X));
                   return std::vector<Var>{sub(g, mul(softmax, broadcast_cols(row_sum(g), cols)))};
                 },
                 "log_softmax");
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Var reshape(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  Array out = x.value().reshaped(shape);
  const Shape orig = x.shape();
  return make_op(std::move(out), {x},
                 [orig](const Var& g, const std::vector<bool>&) { return std::vector<Var>{reshape(g, orig)}; },
                 "reshape");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t rows = parts[0].shape().at(0);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.shape()[0] != rows) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Array out(Shape{rows, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) out.at(r, off + c) = p.value().at(r, c);
    }
    off += w;
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [widths](const Var& g, const std::vector<bool>& need) {
                   std::vector<Var> gs(widths.size());
                   std::size_t o = 0;
                   for (std::size_t i = 0; i < widths.size(); ++i) {
                     if (need[i]) gs[i] = slice_cols(g, o, widths[i]);
                     o += widths[i];
                   }
                   return gs;
                 },
                 "concat_cols");
}

Var slice_cols(const Var& X, std::size_t start, std::size_t len) {
  require_rank(X, 2, "slice_cols");
  const std::size_t rows = X.shape()[0];
  const std::size_t cols = X.shape()[1];
  if (len == 0 || start + len > cols) throw DimensionError("slice_cols: range out of bounds");
  Array out(Shape{rows, len});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < len; ++c) out.at(r, c) = X.value().at(r, start + c);
  }
  return make_op(std::move(out), {X},
                 [start, cols](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{pad_cols(g, start, cols)};
                 },
                 "slice_cols");
}

Var pad_cols(const Var& X, std::size_t start, std::size_t total) {
  require_rank(X, 2, "pad_cols");
  const std::size_t rows = X.shape()[0];
  const std::size_t len = X.shape()[1];
  if (start + len > total) throw DimensionError("pad_cols: range out of bounds");
  Array out(Shape{rows, total}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < len; ++c) out.at(r, start + c) = X.value().at(r, c);
  }
  return make_op(std::move(out), {X},
                 [start, len](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{slice_cols(g, start, len)};
                 },
                 "pad_cols");
}

Var concat_flat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_flat: no operands");
  std::vector<double> data;
  std::vector<Shape> shapes;
  for (const auto& p : parts) {
    const auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
    shapes.push_back(p.shape());
  }
  const std::size_t n = data.size();
  return make_op(Array(Shape{n}, std::move(data)), std::vector<Var>(parts.begin(), parts.end()),
                 [shapes](const Var& g, const std::vector<bool>& need) {
                   std::vector<Var> gs(shapes.size());
                   std::size_t off = 0;
                   for (std::size_t i = 0; i < shapes.size(); ++i) {
                     const std::size_t len = shape_size(shapes[i]);
                     if (need[i]) gs[i] = reshape(slice_flat(g, off, len), shapes[i]);
                     off += len;
                   }
                   return gs;
                 },
                 "concat_flat");
}

Var slice_flat(const Var& x, std::size_t start, std::size_t len) {
  if (len == 0 || start + len > x.size()) throw DimensionError("slice_flat: range out of bounds");
  const auto d = x.value().data();
  std::vector<double> out(d.begin() + static_cast<std::ptrdiff_t>(start),
                          d.begin() + static_cast<std::ptrdiff_t>(start + len));
  const Shape orig = x.shape();
  const std::size_t total = x.size();
  return make_op(Array(Shape{len}, std::move(out)), {x},
                 [orig, start, total](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{reshape(pad_flat(g, start, total), orig)};
                 },
                 "slice_flat");
}

Var pad_flat(const Var& x, std::size_t start, std::size_t total) {
  const std::size_t len = x.size();
  if (start + len > total) throw DimensionError("pad_flat: range out of bounds");
  Array out(Shape{total}, 0.0);
  for (std::size_t i = 0; i < len; ++i) out[start + i] = x.value()[i];
  const Shape orig = x.shape();
  return make_op(std::move(out), {x},
                 [orig, start, len](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{reshape(slice_flat(g, start, len), orig)};
                 },
                 "pad_flat");
}

Var take_rows(const Var& X, std::span<const std::size_t> idx) {
  require_rank(X, 2, "take_rows");
  const std::size_t rows = X.shape()[0];
  const std::size_t cols = X.shape()[1];
  if (idx.empty()) throw DimensionError("take_rows: empty index");
  Array out(Shape{idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw DimensionError("take_rows: index out of range");
    for (std::size_t c = 0; c < cols; ++c) out.at(i, c) = X.value().at(idx[i], c);
  }
  auto shared = share(idx);
  return make_op(std::move(out), {X},
                 [shared, rows](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{scatter_rows(g, *shared, rows)};
                 },
                 "take_rows");
}

Var scatter_rows(const Var& X, std::span<const std::size_t> idx, std::size_t rows) {
  require_rank(X, 2, "scatter_rows");
  const std::size_t cols = X.shape()[1];
  if (idx.size() != X.shape()[0]) throw DimensionError("scatter_rows: index length mismatch");
  Array out(Shape{rows, cols}, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw DimensionError("scatter_rows: index out of range");
    for (std::size_t c = 0; c < cols; ++c) out.at(idx[i], c) += X.value().at(i, c);
  }
  auto shared = share(idx);
  return make_op(std::move(out), {X},
                 [shared](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{take_rows(g, *shared)};
                 },
                 "scatter_rows");
}

Var take_cols(const Var& X, std::span<const std::size_t> idx) {
  require_rank(X, 2, "take_cols");
  const std::size_t rows = X.shape()[0];
  const std::size_t cols = X.shape()[1];
  if (idx.empty()) throw DimensionError("take_cols: empty index");
  Array out(Shape{rows, idx.size()});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= cols) throw DimensionError("take_cols: index out of range");
      out.at(r, i) = X.value().at(r, idx[i]);
    }
  }
  auto shared = share(idx);
  return make_op(std::move(out), {X},
                 [shared, cols](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{scatter_cols(g, *shared, cols)};
                 },
                 "take_cols");
}

Var scatter_cols(const Var& X, std::span<const std::size_t> idx, std::size_t cols) {
  require_rank(X, 2, "scatter_cols");
  const std::size_t rows = X.shape()[0];
  if (idx.size() != X.shape()[1]) throw DimensionError("scatter_cols: index length mismatch");
  Array out(Shape{rows, cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= cols) throw DimensionError("scatter_cols: index out of range");
      out.at(r, idx[i]) += X.value().at(r, i);
    }
  }
  auto shared = share(idx);
  return make_op(std::move(out), {X},
                 [shared](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{take_cols(g, *shared)};
                 },
                 "scatter_cols");
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  return mean(square(sub(a, b)));
}

Array one_hot(std::span<const int> labels, std::size_t num_classes) {
  Array out(Shape{labels.size(), num_classes}, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DomainError("label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
    out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

Var cross_entropy_soft(const Var& logits, const Var& target_probs) {
  Var L = logits.value().rank() == 1 ? reshape(logits, {1, logits.size()}) : logits;
  Var P = target_probs.value().rank() == 1 ? reshape(target_probs, {1, target_probs.size()}) : target_probs;
  require_same_shape(L, P, "cross_entropy");
  const double rows = static_cast<double>(L.shape()[0]);
  return scale(sum(mul(log_softmax_rows(L), P)), -1.0 / rows);
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  Var L = logits.value().rank() == 1 ? reshape(logits, {1, logits.size()}) : logits;
  require_rank(L, 2, "cross_entropy");
  if (L.shape()[0] != labels.size()) throw DimensionError("cross_entropy: label count mismatch");
  return cross_entropy_soft(L, constant(one_hot(labels, L.shape()[1])));
}

Var cosine_distance(const Var& a, const Var& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_distance: operand sizes differ");
  Var fa = reshape(a, {a.size()});
  Var fb = reshape(b, {b.size()});
  Var na = sqrt(dot(fa, fa));
  Var nb = sqrt(dot(fb, fb));
  if (na.item() == 0.0 || nb.item() == 0.0) {
    throw DegenerateInputError("cosine_distance: zero-norm operand");
  }
  return add_scalar(neg(div(dot(fa, fb), mul(na, nb))), 1.0);
}

Var reduce_loss(LossKind kind, const Var& a, const Var& b) {
  switch (kind) {
    case LossKind::mse: return mse(a, b);
    case LossKind::cross_entropy: return cross_entropy_soft(a, b);
    case LossKind::cosine_distance: return cosine_distance(a, b);
  }
  throw ContractError("reduce_loss: unknown kind");
}

}  // namespace ld3m::ad
