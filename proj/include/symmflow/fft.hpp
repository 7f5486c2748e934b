#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include "symmflow/common.hpp"

namespace symmflow {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Real 1-D FFT of a fixed even size. Each instance owns its plans and
/// buffers; instances are not shared across threads (plan creation is
/// serialized globally, execution is per-instance).
class Dft {
 public:
  explicit Dft(int n) : n_(n) {
    require(n >= 2 && n % 2 == 0, "Dft: size must be even and >= 2");
    in_ = fftw_alloc_real(static_cast<size_t>(n));
    out_ = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
  }

  ~Dft() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(in_);
    fftw_free(out_);
  }

  Dft(const Dft&) = delete;
  Dft& operator=(const Dft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  /// Unnormalized forward transform of a real row.
  std::vector<std::complex<double>> forward(const double* row) {
    for (int i = 0; i < n_; ++i) in_[i] = row[i];
    fftw_execute(fwd_);
    std::vector<std::complex<double>> c(static_cast<size_t>(bins()));
    for (int i = 0; i < bins(); ++i) c[static_cast<size_t>(i)] = {out_[i][0], out_[i][1]};
    return c;
  }

  /// Inverse transform including the 1/N normalization.
  std::vector<double> inverse(const std::vector<std::complex<double>>& c) {
    require(static_cast<int>(c.size()) == bins(), "Dft::inverse: bad bin count");
    for (int i = 0; i < bins(); ++i) {
      out_[i][0] = c[static_cast<size_t>(i)].real();
      out_[i][1] = c[static_cast<size_t>(i)].imag();
    }
    fftw_execute(bwd_);
    std::vector<double> r(static_cast<size_t>(n_));
    for (int i = 0; i < n_; ++i) r[static_cast<size_t>(i)] = in_[i] / n_;
    return r;
  }

  /// Signed physical wavenumber of bin i for domain length L.
  double wavenumber(int i, double L) const { return 2.0 * M_PI * i / L; }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

/// order-th spatial derivative of a periodic row via the Fourier symbol
/// (i k)^order; the Nyquist bin is zeroed for odd orders.
inline std::vector<double> spectral_derivative(const std::vector<double>& row, int order,
                                               double L) {
  require(order >= 0, "spectral_derivative: negative order");
  int n = static_cast<int>(row.size());
  Dft dft(n);
  auto c = dft.forward(row.data());
  for (int i = 0; i < dft.bins(); ++i) {
    std::complex<double> ik(0.0, dft.wavenumber(i, L));
    std::complex<double> sym = std::pow(ik, order);
    if (i == n / 2 && order % 2 == 1) sym = 0.0;
    c[static_cast<size_t>(i)] *= sym;
  }
  return dft.inverse(c);
}

/// Periodic antiderivative of a zero-mean row (the k=0 bin is dropped).
inline std::vector<double> spectral_antiderivative(const std::vector<double>& row, double L) {
  int n = static_cast<int>(row.size());
  Dft dft(n);
  auto c = dft.forward(row.data());
  c[0] = 0.0;
  for (int i = 1; i < dft.bins(); ++i) {
    std::complex<double> ik(0.0, dft.wavenumber(i, L));
    c[static_cast<size_t>(i)] /= ik;
  }
  if (n % 2 == 0) c[static_cast<size_t>(n / 2)] = 0.0;
  return dft.inverse(c);
}

}  // namespace symmflow
