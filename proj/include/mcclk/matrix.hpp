#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "mcclk/common.hpp"

namespace mcclk {

// Dense row-major double matrix. All model tables and layer buffers use this.
struct Matrix {
  idx rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(idx r, idx c) : rows(r), cols(c), a(std::size_t(r) * c, 0.0) {}

  double* row(idx i) { return a.data() + std::size_t(i) * cols; }
  const double* row(idx i) const { return a.data() + std::size_t(i) * cols; }
  double& at(idx i, idx j) { return a[std::size_t(i) * cols + j]; }
  double at(idx i, idx j) const { return a[std::size_t(i) * cols + j]; }

  void zero() { std::memset(a.data(), 0, a.size() * sizeof(double)); }
  void resize(idx r, idx c) {
    rows = r;
    cols = c;
    a.assign(std::size_t(r) * c, 0.0);
  }
  bool all_finite() const {
    for (double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double dot(const double* x, const double* y, idx d) {
  double s = 0.0;
  for (idx i = 0; i < d; ++i) s += x[i] * y[i];
  return s;
}

inline void axpy(double alpha, const double* x, double* y, idx d) {
  for (idx i = 0; i < d; ++i) y[i] += alpha * x[i];
}

inline double norm2(const double* x, idx d) { return std::sqrt(dot(x, x, d)); }

// out[i][j] = dot(A_i, B_j). Both operands row-contiguous, the friendly case.
inline void matmul_nt(const Matrix& A, const Matrix& B, Matrix& out,
                      int threads) {
  out.resize(A.rows, B.rows);
  const idx d = A.cols;
  parallel_for(A.rows, threads, [&](idx b, idx e) {
    for (idx i = b; i < e; ++i) {
      const double* ai = A.row(i);
      double* oi = out.row(i);
      for (idx j = 0; j < B.rows; ++j) oi[j] = dot(ai, B.row(j), d);
    }
  });
}

// out[i] (+)= sum_k C[i][k] * B[k]
inline void matmul_nn(const Matrix& C, const Matrix& B, Matrix& out,
                      int threads, bool accumulate = false) {
  if (!accumulate) out.resize(C.rows, B.cols);
  const idx d = B.cols;
  parallel_for(C.rows, threads, [&](idx be, idx en) {
    for (idx i = be; i < en; ++i) {
      const double* ci = C.row(i);
      double* oi = out.row(i);
      for (idx k = 0; k < C.cols; ++k) {
        const double c = ci[k];
        if (c != 0.0) axpy(c, B.row(k), oi, d);
      }
    }
  });
}

// out[k] += sum_i A[i][k] * B[i]  (A^T B). Output rows are owned per worker.
inline void matmul_tn_acc(const Matrix& A, const Matrix& B, Matrix& out,
                          int threads) {
  const idx d = B.cols;
  parallel_for(A.cols, threads, [&](idx kb, idx ke) {
    for (idx k = kb; k < ke; ++k) {
      double* ok = out.row(k);
      for (idx i = 0; i < A.rows; ++i) {
        const double c = A.at(i, k);
        if (c != 0.0) axpy(c, B.row(i), ok, d);
      }
    }
  });
}

inline void add_scaled(Matrix& dst, const Matrix& src, double s) {
  for (std::size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += s * src.a[i];
}

inline Matrix gather_rows(const Matrix& src, std::span<const idx> ids) {
  Matrix out(idx(ids.size()), src.cols);
  for (idx i = 0; i < out.rows; ++i)
    std::memcpy(out.row(i), src.row(ids[i]), src.cols * sizeof(double));
  return out;
}

inline void scatter_add_rows(Matrix& dst, std::span<const idx> ids,
                             const Matrix& src, double scale = 1.0) {
  for (idx i = 0; i < idx(ids.size()); ++i)
    axpy(scale, src.row(i), dst.row(ids[i]), dst.cols);
}

}  // namespace mcclk
