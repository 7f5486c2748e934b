#pragma once

// Independent oracles used by the property and acceptance suites. These
// deliberately avoid the implementation paths they check: residuals come
// from spectral x-derivatives plus high-order time differences, never
// from the WENO pipeline.

#include <cmath>
#include <vector>

#include "symmflow/bundle.hpp"
#include "symmflow/fft.hpp"
#include "symmflow/pde.hpp"

namespace symmflow::oracle {

struct ResidualStats {
  double max_abs_residual = 0.0;
  double mean_abs_residual = 0.0;
  double max_abs_ut = 0.0;
  int64_t points = 0;

  double ratio() const { return max_abs_residual / (max_abs_ut + 1e-300); }
};

/// PDE residual of a stored bundle evaluated with spectral x-derivatives
/// and 4th-order central t-differences (interior t-rows 2..N_t-3).
inline ResidualStats spectral_residual(const SolutionBundle& b) {
  PdeSpec spec = b.spec();
  ResidualStats st;
  require(b.n_t >= 5, "spectral_residual: need at least 5 t-rows");
  int n_x = static_cast<int>(b.n_x);
  double h_t = b.T / static_cast<double>(b.n_t - 1);

  // x-derivatives of every row, by order.
  std::vector<int> orders;
  for (auto [dx, dt] : spec.required_derivatives())
    if (dt == 0) orders.push_back(dx);
  std::vector<std::vector<std::vector<double>>> dx_rows(
      static_cast<size_t>(b.n_t));
  std::vector<double> row(static_cast<size_t>(n_x));
  for (int64_t i = 0; i < b.n_t; ++i) {
    for (int j = 0; j < n_x; ++j) row[static_cast<size_t>(j)] = b.u.at(i, j);
    for (int o : orders)
      dx_rows[static_cast<size_t>(i)].push_back(spectral_derivative(row, o, b.L));
  }

  double sum_abs = 0.0;
  for (int64_t i = 2; i + 2 < b.n_t; ++i) {
    for (int j = 0; j < n_x; ++j) {
      double ut = (-b.u.at(i + 2, j) + 8.0 * b.u.at(i + 1, j) - 8.0 * b.u.at(i - 1, j) +
                   b.u.at(i - 2, j)) /
                  (12.0 * h_t);
      DerivMap d;
      d[{0, 1}] = ut;
      for (size_t o = 0; o < orders.size(); ++o)
        d[{orders[o], 0}] = dx_rows[static_cast<size_t>(i)][o][static_cast<size_t>(j)];
      double r = residual(spec, b.u.at(i, j), d, b.x(j), b.t(i));
      st.max_abs_residual = std::max(st.max_abs_residual, std::fabs(r));
      st.max_abs_ut = std::max(st.max_abs_ut, std::fabs(ut));
      sum_abs += std::fabs(r);
      st.points += 1;
    }
  }
  st.mean_abs_residual = sum_abs / static_cast<double>(st.points);
  return st;
}

/// Max wavenumber index with non-negligible energy in the DFT of a row.
inline int max_active_wavenumber(const std::vector<double>& row, double rel_tol = 1e-9) {
  Dft dft(static_cast<int>(row.size()));
  auto c = dft.forward(row.data());
  double peak = 0.0;
  for (const auto& z : c) peak = std::max(peak, std::abs(z));
  int top = 0;
  for (int i = 1; i < static_cast<int>(c.size()); ++i)
    if (std::abs(c[static_cast<size_t>(i)]) > rel_tol * peak) top = i;
  return top;
}

}  // namespace symmflow::oracle
