#pragma once

#include <cblas.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "symmflow/common.hpp"

namespace symmflow::linalg {

/// C = alpha * op(A) * op(B) + beta * C, row-major dense.
inline void dgemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                  double alpha, const double* a, const double* b, double beta,
                  double* c) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(trans_a ? m : k), b,
              static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
}

/// In-place LU factorization with partial pivoting of an n x n row-major
/// matrix. Returns false if a pivot falls below `pivot_tol` times the
/// largest initial entry (caller treats the system as degenerate).
inline bool lu_factor(double* a, int* piv, int n, double pivot_tol = 1e-12) {
  double scale = 0.0;
  for (int i = 0; i < n * n; ++i) scale = std::max(scale, std::fabs(a[i]));
  if (scale == 0.0) return false;
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::fabs(a[k * n + k]);
    for (int i = k + 1; i < n; ++i) {
      double v = std::fabs(a[i * n + k]);
      if (v > best) { best = v; p = i; }
    }
    if (best < pivot_tol * scale) return false;
    piv[k] = p;
    if (p != k)
      for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
    double inv = 1.0 / a[k * n + k];
    for (int i = k + 1; i < n; ++i) {
      double m = a[i * n + k] * inv;
      a[i * n + k] = m;
      for (int j = k + 1; j < n; ++j) a[i * n + j] -= m * a[k * n + j];
    }
  }
  return true;
}

/// Solve A x = b given lu_factor output; b is overwritten with x.
/// Row interchanges are applied to b up front (the stored L rows are in
/// fully-pivoted order), then L and U substitutions run cleanly.
inline void lu_solve(const double* lu, const int* piv, int n, double* b) {
  for (int k = 0; k < n; ++k)
    if (piv[k] != k) std::swap(b[k], b[piv[k]]);
  for (int k = 0; k < n; ++k)
    for (int i = k + 1; i < n; ++i) b[i] -= lu[i * n + k] * b[k];
  for (int i = n - 1; i >= 0; --i) {
    for (int j = i + 1; j < n; ++j) b[i] -= lu[i * n + j] * b[j];
    b[i] /= lu[i * n + i];
  }
}

/// Solve A^T x = b given lu_factor output of A.
inline void lu_solve_transposed(const double* lu, const int* piv, int n, double* b) {
  // A = P^T L U  =>  A^T = U^T L^T P
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) b[i] -= lu[j * n + i] * b[j];
    b[i] /= lu[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i)
    for (int j = i + 1; j < n; ++j) b[i] -= lu[j * n + i] * b[j];
  for (int k = n - 1; k >= 0; --k)
    if (piv[k] != k) std::swap(b[k], b[piv[k]]);
}

/// Ratio of largest to smallest |U_kk|; a cheap conditioning proxy for
/// the small Vandermonde systems used by the WENO reconstruction.
inline double lu_diag_ratio(const double* lu, int n) {
  double lo = std::fabs(lu[0]), hi = lo;
  for (int i = 1; i < n; ++i) {
    double v = std::fabs(lu[i * n + i]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return lo == 0.0 ? INFINITY : hi / lo;
}

/// Dense solve of a small symmetric-positive-ish system via LU; used for
/// Gram-matrix least squares. Throws on singular input.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  int n = static_cast<int>(b.size());
  std::vector<int> piv(static_cast<size_t>(n));
  require_numeric(lu_factor(a.data(), piv.data(), n, 1e-14),
                  "solve_dense: singular matrix");
  lu_solve(a.data(), piv.data(), n, b.data());
  return b;
}

}  // namespace symmflow::linalg
