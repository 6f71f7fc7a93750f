// SPDX-License-Identifier: Apache-2.0
#include "ld3m/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace ld3m::kernels {
namespace {

std::atomic<Backend> g_backend{Backend::openmp};

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline double a_at(const GemmDims& d, std::span<const double> a, std::size_t i, std::size_t p) {
  return d.trans_a ? a[p * d.m + i] : a[i * d.k + p];
}

inline double b_at(const GemmDims& d, std::span<const double> b, std::size_t p, std::size_t j) {
  return d.trans_b ? b[j * d.k + p] : b[p * d.n + j];
}

inline double apply(Unary op, double x) {
  switch (op) {
    case Unary::relu: return x > 0.0 ? x : 0.0;
    case Unary::relu_mask: return x > 0.0 ? 1.0 : 0.0;
    case Unary::tanh: return std::tanh(x);
    case Unary::exp: return std::exp(x);
    case Unary::log: return std::log(x);
    case Unary::sqrt: return std::sqrt(x);
    case Unary::square: return x * x;
  }
  return 0.0;
}

inline double apply(Binary op, double a, double b) {
  switch (op) {
    case Binary::add: return a + b;
    case Binary::sub: return a - b;
    case Binary::mul: return a * b;
    case Binary::div: return a / b;
  }
  return 0.0;
}

inline void log_softmax_row(std::size_t cols, const double* x, double* out) {
  double mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
  const double lse = mx + std::log(s);
  for (std::size_t j = 0; j < cols; ++j) out[j] = x[j] - lse;
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void gemm(const GemmDims& d, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  if (backend() == Backend::serial) {
    serial::gemm(d, a, b, c);
  } else {
    omp::gemm(d, a, b, c);
  }
}

void log_softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                      std::span<double> out) {
  if (backend() == Backend::serial) {
    serial::log_softmax_rows(rows, cols, x, out);
  } else {
    omp::log_softmax_rows(rows, cols, x, out);
  }
}

void unary(Unary op, std::span<const double> x, std::span<double> out) {
  if (backend() == Backend::serial) {
    serial::unary(op, x, out);
  } else {
    omp::unary(op, x, out);
  }
}

void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
  if (backend() == Backend::serial) {
    serial::binary(op, a, b, out);
  } else {
    omp::binary(op, a, b, out);
  }
}

namespace serial {

void gemm(const GemmDims& d, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) sum += a_at(d, a, i, p) * b_at(d, b, p, j);
      c[i * d.n + j] = sum;
    }
  }
}

void log_softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                      std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) log_softmax_row(cols, &x[r * cols], &out[r * cols]);
}

void unary(Unary op, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = apply(op, x[i]);
}

void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], b[i]);
}

}  // namespace serial

namespace omp {

void gemm(const GemmDims& d, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
  const bool par = d.m * d.n * d.k >= kParallelWork;
  if (d.trans_b) {
    // B^T rows are contiguous along p: dot-product form reads both operands in order.
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t ii = 0; ii < m; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      for (std::size_t j = 0; j < d.n; ++j) {
        const double* brow = &b[j * d.k];
        double sum = 0.0;
        for (std::size_t p = 0; p < d.k; ++p) sum += a_at(d, a, i, p) * brow[p];
        c[i * d.n + j] = sum;
      }
    }
    return;
  }
  // Row-axpy form; every c[i, j] still sums p = 0..k-1 in order.
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < m; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = &c[i * d.n];
    std::fill(crow, crow + d.n, 0.0);
    for (std::size_t p = 0; p < d.k; ++p) {
      const double av = a_at(d, a, i, p);
      const double* brow = &b[p * d.n];
      for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
    }
  }
}

void log_softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                      std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    log_softmax_row(cols, &x[ur * cols], &out[ur * cols]);
  }
}

void unary(Unary op, std::span<const double> x, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = apply(op, x[i]);
}

void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = apply(op, a[i], b[i]);
}

}  // namespace omp

}  // namespace ld3m::kernels
