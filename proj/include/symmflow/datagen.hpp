#pragma once

// Pseudospectral data generation from random Fourier initial conditions.
// Stiff dispersive equations (KdV family, KS) step with an ETDRK4
// exponential integrator; the heat backbone for Burgers steps with
// classical RK4 on the diagonal Fourier system and maps back through the
// Cole-Hopf transformation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include "symmflow/bundle.hpp"
#include "symmflow/fft.hpp"
#include "symmflow/pde.hpp"
#include "symmflow/rng.hpp"

namespace symmflow {

struct FourierIC {
  int modes;
  std::vector<double> amplitudes;
  std::vector<int> wavenumbers;
  std::vector<double> phases;
};

inline FourierIC draw_fourier_ic(Rng& rng, int P, double amp_lo, double amp_hi,
                                 int l_lo, int l_hi) {
  require(P >= 1, "random_fourier_ic: need at least one mode");
  require(l_lo >= 1 && l_hi >= l_lo, "random_fourier_ic: bad wavenumber range");
  require(amp_hi >= amp_lo, "random_fourier_ic: bad amplitude range");
  FourierIC ic;
  ic.modes = P;
  for (int p = 0; p < P; ++p) {
    ic.amplitudes.push_back(rng.uniform(amp_lo, amp_hi));
    ic.wavenumbers.push_back(static_cast<int>(rng.uniform_int(l_lo, l_hi)));
    ic.phases.push_back(rng.uniform(0.0, 2.0 * M_PI));
  }
  return ic;
}

inline std::vector<double> sample_fourier_ic(const FourierIC& ic, double L, int n_x) {
  require(n_x >= 2 && n_x % 2 == 0, "random_fourier_ic: N_x must be even");
  std::vector<double> row(static_cast<size_t>(n_x), 0.0);
  for (int j = 0; j < n_x; ++j) {
    double x = L * j / n_x;
    double v = 0.0;
    for (int p = 0; p < ic.modes; ++p)
      v += ic.amplitudes[static_cast<size_t>(p)] *
           std::sin(2.0 * M_PI * ic.wavenumbers[static_cast<size_t>(p)] * x / L +
                    ic.phases[static_cast<size_t>(p)]);
    row[static_cast<size_t>(j)] = v;
  }
  return row;
}

/// u(x,0) = sum_p A_p sin(2 pi l_p x / L + phi_p), deterministic in seed.
inline std::vector<double> random_fourier_ic(uint64_t seed, int P, double L,
                                             double amp_lo, double amp_hi, int l_lo,
                                             int l_hi, int n_x) {
  Rng rng = Rng::derive(seed, 0x1c0de);
  return sample_fourier_ic(draw_fourier_ic(rng, P, amp_lo, amp_hi, l_lo, l_hi), L, n_x);
}

// ---------------------------------------------------------------------------
// ETDRK4 (Cox-Matthews coefficients via Kassam-Trefethen contour averages)

namespace detail {

struct Etdrk4Coeffs {
  std::vector<std::complex<double>> E, E2, Q, f1, f2, f3;
};

inline Etdrk4Coeffs etdrk4_coeffs(const std::vector<std::complex<double>>& symbol,
                                  double h) {
  const int M = 64;  // contour points; phi-functions are entire, so a
                     // unit circle around each h*lambda is sufficient
  size_t n = symbol.size();
  Etdrk4Coeffs c;
  c.E.resize(n); c.E2.resize(n); c.Q.resize(n);
  c.f1.resize(n); c.f2.resize(n); c.f3.resize(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> hl = h * symbol[k];
    c.E[k] = std::exp(hl);
    c.E2[k] = std::exp(0.5 * hl);
    std::complex<double> q = 0.0, f1 = 0.0, f2 = 0.0, f3 = 0.0;
    for (int j = 0; j < M; ++j) {
      double th = 2.0 * M_PI * (j + 0.5) / M;
      std::complex<double> z = hl + std::complex<double>(std::cos(th), std::sin(th));
      std::complex<double> ez = std::exp(z), z2 = z * z, z3 = z2 * z;
      q += (std::exp(0.5 * z) - 1.0) / z;
      f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z2)) / z3;
      f2 += (2.0 + z + ez * (-2.0 + z)) / z3;
      f3 += (-4.0 - 3.0 * z - z2 + ez * (4.0 - z)) / z3;
    }
    double inv = h / M;
    c.Q[k] = q * inv;
    c.f1[k] = f1 * inv;
    c.f2[k] = f2 * inv;
    c.f3[k] = f3 * inv;
  }
  return c;
}

/// Spectral workspace for one equation at one grid size.
class SpectralStepper {
 public:
  SpectralStepper(const PdeSpec& spec, int n_x) : spec_(spec), n_(n_x), dft_(n_x) {
    int bins = dft_.bins();
    symbol_.resize(static_cast<size_t>(bins));
    ik_.resize(static_cast<size_t>(bins));
    for (int i = 0; i < bins; ++i) {
      double k = dft_.wavenumber(i, spec.L);
      ik_[static_cast<size_t>(i)] = {0.0, (i == n_ / 2) ? 0.0 : k};
      switch (spec_.eq) {
        case Equation::Kdv:
        case Equation::Nkdv:
        case Equation::Ckdv:
          symbol_[static_cast<size_t>(i)] = {0.0, k * k * k};  // -d_xxx
          break;
        case Equation::Ks:
          symbol_[static_cast<size_t>(i)] = {k * k - k * k * k * k, 0.0};
          break;
        case Equation::Burgers:
          throw ValidationError("Burgers evolves through the heat backbone");
      }
    }
    dealias_.resize(static_cast<size_t>(bins), 1.0);
    for (int i = 0; i < bins; ++i)
      if (i > n_ / 3) dealias_[static_cast<size_t>(i)] = 0.0;
  }

  /// Nonlinear term in Fourier space with 2/3-rule dealiasing.
  std::vector<std::complex<double>> nonlinear(const std::vector<std::complex<double>>& v,
                                              double t) {
    auto vx = v;
    for (size_t i = 0; i < v.size(); ++i) vx[i] *= ik_[i];
    auto u = dft_.inverse(v);
    auto ux = dft_.inverse(vx);
    std::vector<double> w(u.size());
    for (size_t i = 0; i < u.size(); ++i) w[i] = -u[i] * ux[i];
    auto nh = dft_.forward(w.data());
    for (size_t i = 0; i < nh.size(); ++i) nh[i] *= dealias_[i];
    if (spec_.eq == Equation::Ckdv) {
      double damp = -0.5 / (t + 1.0);
      for (size_t i = 0; i < nh.size(); ++i) nh[i] += damp * v[i];
    }
    return nh;
  }

  /// One ETDRK4 step from time t with step h.
  std::vector<std::complex<double>> step(const std::vector<std::complex<double>>& v,
                                         double t, double h) {
    const Etdrk4Coeffs& c = coeffs(h);
    auto nv = nonlinear(v, t);
    size_t n = v.size();
    std::vector<std::complex<double>> a(n), b(n), d(n), out(n);
    for (size_t i = 0; i < n; ++i) a[i] = c.E2[i] * v[i] + c.Q[i] * nv[i];
    auto na = nonlinear(a, t + 0.5 * h);
    for (size_t i = 0; i < n; ++i) b[i] = c.E2[i] * v[i] + c.Q[i] * na[i];
    auto nb = nonlinear(b, t + 0.5 * h);
    for (size_t i = 0; i < n; ++i) d[i] = c.E2[i] * a[i] + c.Q[i] * (2.0 * nb[i] - nv[i]);
    auto nd = nonlinear(d, t + h);
    for (size_t i = 0; i < n; ++i)
      out[i] = c.E[i] * v[i] + c.f1[i] * nv[i] + 2.0 * c.f2[i] * (na[i] + nb[i]) +
               c.f3[i] * nd[i];
    return out;
  }

  Dft& dft() { return dft_; }

 private:
  const Etdrk4Coeffs& coeffs(double h) {
    auto it = cache_.find(h);
    if (it == cache_.end()) it = cache_.emplace(h, etdrk4_coeffs(symbol_, h)).first;
    return it->second;
  }

  PdeSpec spec_;
  int n_;
  Dft dft_;
  std::vector<std::complex<double>> symbol_, ik_;
  std::vector<double> dealias_;
  std::map<double, Etdrk4Coeffs> cache_;
};

inline void check_row(const std::vector<double>& row, double t_reached) {
  for (double v : row) {
    require_numeric(std::isfinite(v),
                    "evolve: NaN at t=" + std::to_string(t_reached));
    require_numeric(std::fabs(v) <= 1e6,
                    "evolve: blow-up (|u| > 1e6) at t=" + std::to_string(t_reached));
  }
}

inline void check_bandlimit(const PdeSpec& spec, int n_x) {
  require(spec.ic_wavenumber_hi <= n_x / 8,
          spec.name + ": initial condition must satisfy max wavenumber <= N_x/8");
}

}  // namespace detail

/// Integrate a 1-D evolution equation from `ic` and sample the solution at
/// `sample_times` (ascending, starting at 0). Substeps divide each gap
/// evenly with size <= spec.dt_target.
inline SolutionBundle evolve_at_times(const PdeSpec& spec, const std::vector<double>& ic,
                                      const std::vector<double>& sample_times) {
  int n_x = static_cast<int>(ic.size());
  int n_t = static_cast<int>(sample_times.size());
  require(n_t >= 1, "evolve: need at least one sample time");
  SolutionBundle b;
  b.equation = spec.name;
  b.L = spec.L;
  b.n_x = n_x;
  b.n_t = n_t;
  b.u = NdArray({n_t, n_x});

  detail::SpectralStepper stepper(spec, n_x);
  auto v = stepper.dft().forward(ic.data());
  for (int j = 0; j < n_x; ++j) b.u.at(0, j) = ic[static_cast<size_t>(j)];
  double t_now = sample_times[0];
  require(t_now == 0.0, "evolve: sample times must start at 0");
  for (int i = 1; i < n_t; ++i) {
    double gap = sample_times[static_cast<size_t>(i)] - t_now;
    require(gap > 0.0, "evolve: sample times must be strictly increasing");
    int n_sub = std::max<int>(1, static_cast<int>(std::ceil(gap / spec.dt_target)));
    double h = gap / n_sub;
    for (int s = 0; s < n_sub; ++s) {
      v = stepper.step(v, t_now, h);
      t_now += h;
    }
    t_now = sample_times[static_cast<size_t>(i)];
    auto row = stepper.dft().inverse(v);
    detail::check_row(row, t_now);
    for (int j = 0; j < n_x; ++j) b.u.at(i, j) = row[static_cast<size_t>(j)];
  }
  return b;
}

/// Uniform-output-time evolution of KdV/KS/cKdV (Burgers goes through
/// evolve_heat + cole_hopf; nKdV through generate_bundle's time warp).
inline SolutionBundle evolve(const PdeSpec& spec, const std::vector<double>& ic, int n_t,
                             double T) {
  require(n_t >= 1, "evolve: N_t must be >= 1");
  std::vector<double> times(static_cast<size_t>(n_t), 0.0);
  for (int i = 1; i < n_t; ++i) times[static_cast<size_t>(i)] = T * i / (n_t - 1);
  SolutionBundle b = evolve_at_times(spec, ic, times);
  b.T = T;
  return b;
}

/// Heat equation phi_t = nu phi_xx: classical RK4 on the diagonal Fourier
/// system (exact per-mode quartic Taylor factor of exp(-nu k^2 h)).
inline SolutionBundle evolve_heat(const std::vector<double>& phi0, double nu, double L,
                                  int n_t, double T, double dt_target) {
  int n_x = static_cast<int>(phi0.size());
  SolutionBundle b;
  b.equation = "heat";
  b.L = L;
  b.T = T;
  b.n_x = n_x;
  b.n_t = n_t;
  b.u = NdArray({n_t, n_x});
  Dft dft(n_x);
  auto v = dft.forward(phi0.data());
  for (int j = 0; j < n_x; ++j) b.u.at(0, j) = phi0[static_cast<size_t>(j)];
  double gap = n_t > 1 ? T / (n_t - 1) : 0.0;
  for (int i = 1; i < n_t; ++i) {
    int n_sub = std::max<int>(1, static_cast<int>(std::ceil(gap / dt_target)));
    double h = gap / n_sub;
    for (int s = 0; s < n_sub; ++s)
      for (int k = 0; k < dft.bins(); ++k) {
        double z = -nu * dft.wavenumber(k, L) * dft.wavenumber(k, L) * h;
        double f = 1.0 + z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)));
        v[static_cast<size_t>(k)] *= f;
      }
    auto row = dft.inverse(v);
    detail::check_row(row, gap * i);
    for (int j = 0; j < n_x; ++j) b.u.at(i, j) = row[static_cast<size_t>(j)];
  }
  return b;
}

/// Cole-Hopf map from a positive heat solution phi to a Burgers solution:
/// u = -2 nu phi_x / phi solves u_t + u u_x - nu u_xx = 0.
inline SolutionBundle cole_hopf(const SolutionBundle& phi, double nu) {
  SolutionBundle b = phi;
  b.equation = "burgers";
  b.params["nu"] = nu;
  std::vector<double> row(static_cast<size_t>(phi.n_x));
  for (int64_t i = 0; i < phi.n_t; ++i) {
    for (int64_t j = 0; j < phi.n_x; ++j) {
      double p = phi.u.at(i, j);
      require_numeric(p > 0.0, "cole_hopf: nonpositive phi at t-row " + std::to_string(i));
      row[static_cast<size_t>(j)] = p;
    }
    auto px = spectral_derivative(row, 1, phi.L);
    for (int64_t j = 0; j < phi.n_x; ++j)
      b.u.at(i, j) = -2.0 * nu * px[static_cast<size_t>(j)] / row[static_cast<size_t>(j)];
  }
  return b;
}

/// Full generation pipeline for one bundle.
inline SolutionBundle generate_bundle(const PdeSpec& spec, uint64_t seed, int n_x,
                                      int n_t) {
  detail::check_bandlimit(spec, n_x);
  auto u0 = random_fourier_ic(seed, spec.ic_modes, spec.L, spec.ic_amp_lo, spec.ic_amp_hi,
                              spec.ic_wavenumber_lo, spec.ic_wavenumber_hi, n_x);
  SolutionBundle b;
  switch (spec.eq) {
    case Equation::Kdv:
    case Equation::Ks:
    case Equation::Ckdv:
      b = evolve(spec, u0, n_t, spec.T);
      break;
    case Equation::Nkdv: {
      // Uniform grid in warped time; the KdV integrator runs in physical
      // time sampled at t = t0(e^{t_hat/t0} - 1).
      PdeSpec kdv = spec;
      kdv.eq = Equation::Kdv;
      std::vector<double> times(static_cast<size_t>(n_t));
      for (int i = 0; i < n_t; ++i) {
        double t_hat = n_t > 1 ? spec.T * i / (n_t - 1) : 0.0;
        times[static_cast<size_t>(i)] = nkdv_time_forward(t_hat, spec.t0);
      }
      b = evolve_at_times(kdv, u0, times);
      b.equation = spec.name;
      b.T = spec.T;
      b.params["t0"] = spec.t0;
      break;
    }
    case Equation::Burgers: {
      // phi = exp(-I/(2 nu)) with I the periodic antiderivative of u0,
      // so that cole_hopf(phi) starts exactly at u0.
      auto I = spectral_antiderivative(u0, spec.L);
      std::vector<double> phi0(I.size());
      for (size_t i = 0; i < I.size(); ++i) phi0[i] = std::exp(-I[i] / (2.0 * spec.nu));
      SolutionBundle heat = evolve_heat(phi0, spec.nu, spec.L, n_t, spec.T, spec.dt_target);
      b = cole_hopf(heat, spec.nu);
      break;
    }
  }
  b.seed = seed;
  if (spec.eq == Equation::Burgers) b.params["nu"] = spec.nu;
  require_numeric(b.u.all_finite(), "generate_bundle: non-finite output");
  return b;
}

}  // namespace symmflow
