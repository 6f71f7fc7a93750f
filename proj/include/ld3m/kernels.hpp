// SPDX-License-Identifier: Apache-2.0
#pragma once

// Numeric inner loops used by the autodiff ops. Each kernel has a plain
// serial reference and an OpenMP version; both accumulate every output
// element in the same order, so results are bit-identical and the reference
// doubles as the test oracle.

#include <cstddef>
#include <span>

namespace ld3m::kernels {

enum class Backend { serial, openmp };

void set_backend(Backend b);
Backend backend();

// RAII override used by tests and benchmarks.
class BackendScope {
 public:
  explicit BackendScope(Backend b) : saved_(backend()) { set_backend(b); }
  ~BackendScope() { set_backend(saved_); }
  BackendScope(const BackendScope&) = delete;
  BackendScope& operator=(const BackendScope&) = delete;

 private:
  Backend saved_;
};

// C[m x n] = op(A) * op(B), op(X) = X or X^T; A, B, C row-major.
// A is m x k (or k x m when trans_a), B is k x n (or n x k when trans_b).
struct GemmDims {
  std::size_t m, n, k;
  bool trans_a = false;
  bool trans_b = false;
};

void gemm(const GemmDims& d, std::span<const double> a, std::span<const double> b,
          std::span<double> c);

// out[r, :] = log_softmax(x[r, :])
void log_softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                      std::span<double> out);

enum class Unary { relu, relu_mask, tanh, exp, log, sqrt, square };
enum class Binary { add, sub, mul, div };

void unary(Unary op, std::span<const double> x, std::span<double> out);
void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out);

namespace serial {
void gemm(const GemmDims& d, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void log_softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                      std::span<double> out);
void unary(Unary op, std::span<const double> x, std::span<double> out);
void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out);
}  // namespace serial

namespace omp {
void gemm(const GemmDims& d, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void log_softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                      std::span<double> out);
void unary(Unary op, std::span<const double> x, std::span<double> out);
void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out);
}  // namespace omp

}  // namespace ld3m::kernels
