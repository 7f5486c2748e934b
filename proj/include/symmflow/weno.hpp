#pragma once

// Differentiable WENO numerical differentiation on deformed logical
// grids. Stencils are 5x2 index blocks around each evaluation point
// (periodic in x, clamped one-sided in t); each block carries a degree
// (4,1) bivariate reconstruction polynomial fitted through a scaled
// Vandermonde solve. Estimates are blended with weights
// gamma/(eps+IS)^b computed from smoothness indicators integrated over
// the grid cell containing the point. Everything downstream of the
// deformed coordinates is on-tape, with the linear solve differentiated
// through the implicit-function rule.

#include <array>
#include <map>
#include <memory>
#include <vector>

#include "symmflow/flow.hpp"
#include "symmflow/pde.hpp"
#include "symmflow/tape.hpp"

namespace symmflow::weno {

inline constexpr int kBasis = 10;        // x^i t^j, i<=4, j<=1
inline constexpr int kStencilPts = 10;   // 5 x-points, 2 t-rows
inline constexpr double kCenterGamma = 100.0;
inline constexpr double kSideGamma = 1.0;
inline constexpr double kEps = 1e-6;
inline constexpr int kExponentB = 4;
inline constexpr double kCondLimit = 1e10;

/// Basis exponent (i, j) of column `idx`.
inline std::pair<int, int> basis_exponent(int idx) { return {idx % 5, idx / 5}; }
inline int basis_index(int i, int j) { return i + 5 * j; }

/// Falling factorial n! / (n-k)!.
inline double falling(int n, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= static_cast<double>(n - i);
  return r;
}

// ---------------------------------------------------------------------------
// Stencil enumeration

struct Stencil {
  // (row, col) logical members; col is unwrapped and may leave [0, N_x).
  std::array<std::pair<int64_t, int64_t>, kStencilPts> members;
  double gamma;
  int x_shift;  // leading x-offset o in {-4..0}
  int t_shift;  // leading t-offset p in {-1, 0}
};

inline std::vector<Stencil> build_stencils(int64_t n_x, int64_t n_t, int64_t row,
                                           int64_t col) {
  require(n_t >= 2, "build_stencils: need at least two t-rows");
  require(n_x >= 5, "build_stencils: need at least five x-columns");
  require(row >= 0 && row < n_t && col >= 0 && col < n_x,
          "build_stencils: evaluation index out of range");
  std::vector<Stencil> out;
  for (int p = -1; p <= 0; ++p) {
    if (row + p < 0 || row + p + 1 >= n_t) continue;  // clamp one-sided in t
    for (int o = -4; o <= 0; ++o) {
      Stencil s;
      s.gamma = (o == -2) ? kCenterGamma : kSideGamma;
      s.x_shift = o;
      s.t_shift = p;
      int m = 0;
      for (int tj = 0; tj <= 1; ++tj)
        for (int i = 0; i < 5; ++i)
          s.members[static_cast<size_t>(m++)] = {row + p + tj, col + o + i};
      out.push_back(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-double reconstruction and smoothness (shared by the tape op and
// the unit tests)

/// Vandermonde row of the scaled monomial basis at (dx, dt) =
/// ((x - xe)/hx, (t - te)/ht).
inline void basis_row(double dx, double dt, double* row) {
  double xp[5] = {1.0, dx, dx * dx, dx * dx * dx, dx * dx * dx * dx};
  for (int j = 0; j <= 1; ++j)
    for (int i = 0; i < 5; ++i) row[basis_index(i, j)] = xp[i] * (j ? dt : 1.0);
}

struct ReconstructionPoly {
  std::array<double, kBasis> coeffs;  // over the scaled centered basis
  bool degenerate = false;
};

/// Interpolating polynomial through 10 member points. Coordinates are
/// physical; the basis is centered at (xe, te) and scaled by (hx, ht).
inline ReconstructionPoly reconstruct_polynomial(const double* xs, const double* ts,
                                                 const double* us, double xe, double te,
                                                 double hx, double ht) {
  ReconstructionPoly p;
  double a[kStencilPts * kBasis];
  for (int r = 0; r < kStencilPts; ++r)
    basis_row((xs[r] - xe) / hx, (ts[r] - te) / ht, a + r * kBasis);
  int piv[kBasis];
  if (!linalg::lu_factor(a, piv, kBasis) || linalg::lu_diag_ratio(a, kBasis) > kCondLimit) {
    p.degenerate = true;
    p.coeffs.fill(0.0);
    return p;
  }
  for (int r = 0; r < kStencilPts; ++r) p.coeffs[static_cast<size_t>(r)] = us[r];
  linalg::lu_solve(a, piv, kBasis, p.coeffs.data());
  return p;
}

/// Integral weight W_{beta,beta'} of the smoothness quadratic form
/// IS = sum_alpha |cell|^{|a|-1} int_cell (d^alpha p)^2, with the cell
/// [xe, xe+ax*hx] x [te, te+at*ht] and scaled basis coefficients.
inline double is_pair_weight(int bi, int bj, double ax, double at, double hx, double ht) {
  auto [i, j] = basis_exponent(bi);
  auto [k, l] = basis_exponent(bj);
  double axa = std::fabs(ax), ata = std::fabs(at);
  double vol = axa * hx * ata * ht;
  double w = 0.0;
  for (int a = 0; a <= std::min(i, k); ++a)
    for (int b = 0; b <= std::min(j, l); ++b) {
      if (a + b < 1) continue;
      int mx = i + k - 2 * a, nt = j + l - 2 * b;
      double ix = std::pow(axa, mx + 1) / (mx + 1);
      double it = std::pow(ata, nt + 1) / (nt + 1);
      double scale = std::pow(hx, 1 - 2 * a) * std::pow(ht, 1 - 2 * b);
      w += std::pow(vol, a + b - 1) * scale * falling(i, a) * falling(k, a) *
           falling(j, b) * falling(l, b) * ix * it;
    }
  return w;
}

/// IS of a reconstruction polynomial over the cell spanning ax*hx by
/// at*ht from the evaluation point (scaled cell extents ax, at).
inline double smoothness_indicator(const ReconstructionPoly& p, double ax, double at,
                                   double hx, double ht) {
  require_numeric(ax != 0.0 && at != 0.0, "smoothness_indicator: zero-volume cell");
  double is = 0.0;
  for (int bi = 0; bi < kBasis; ++bi)
    for (int bj = bi; bj < kBasis; ++bj) {
      double w = is_pair_weight(bi, bj, ax, at, hx, ht);
      double c = p.coeffs[static_cast<size_t>(bi)] * p.coeffs[static_cast<size_t>(bj)];
      is += (bi == bj ? 1.0 : 2.0) * w * c;
    }
  return is;
}

// ---------------------------------------------------------------------------
// Batched on-tape pipeline

/// Precomputed gather topology for a set of interior evaluation points on
/// an n_t x n_x logical grid.
struct WenoPlan {
  int64_t n_x = 0, n_t = 0;
  double L = 0.0, T = 0.0;
  double hx = 0.0, ht = 0.0;
  int64_t m = 0;       // evaluation points
  int n_stencils = 10; // interior rows: 5 x-shifts x 2 t-sides

  std::shared_ptr<std::vector<int64_t>> eval_idx;     // [M]
  std::shared_ptr<std::vector<int64_t>> member_idx;   // [M*S*P]
  std::shared_ptr<std::vector<int64_t>> member_rep;   // [M*S*P] eval idx repeated
  NdArray member_wrap;                                // [M*S*P] +-L shifts
  NdArray gamma;                                      // [M*S]
  std::shared_ptr<std::vector<int64_t>> right_idx;    // [M] (row, col+1)
  NdArray right_wrap;                                 // [M]
  std::shared_ptr<std::vector<int64_t>> up_idx;       // [M] (row+1, col)
  std::shared_ptr<std::vector<int64_t>> stencil_of;   // [M*S] -> eval point index
  std::shared_ptr<std::vector<int64_t>> coeff_col[kBasis];  // [M*S] column gathers
};

inline WenoPlan make_weno_plan(int64_t n_x, int64_t n_t, double L, double T,
                               std::span<const std::pair<int64_t, int64_t>> eval_pts) {
  require(n_t >= 3, "weno plan: need at least three t-rows");
  require(n_x >= 8, "weno plan: need at least eight x-columns");
  WenoPlan plan;
  plan.n_x = n_x;
  plan.n_t = n_t;
  plan.L = L;
  plan.T = T;
  plan.hx = L / static_cast<double>(n_x);
  plan.ht = T / static_cast<double>(n_t - 1);
  plan.m = static_cast<int64_t>(eval_pts.size());
  const int S = plan.n_stencils;
  const int P = kStencilPts;

  auto eidx = std::make_shared<std::vector<int64_t>>();
  auto midx = std::make_shared<std::vector<int64_t>>();
  auto mrep = std::make_shared<std::vector<int64_t>>();
  auto ridx = std::make_shared<std::vector<int64_t>>();
  auto uidx = std::make_shared<std::vector<int64_t>>();
  auto sof = std::make_shared<std::vector<int64_t>>();
  plan.member_wrap = NdArray({plan.m * S * P});
  plan.right_wrap = NdArray({plan.m});
  plan.gamma = NdArray({plan.m * S});

  int64_t mw = 0;
  for (int64_t e = 0; e < plan.m; ++e) {
    auto [row, col] = eval_pts[static_cast<size_t>(e)];
    require(row >= 1 && row + 1 < n_t,
            "weno plan: evaluation rows must be interior (one t-neighbor each side)");
    auto stencils = build_stencils(n_x, n_t, row, col);
    require(static_cast<int>(stencils.size()) == S, "weno plan: expected 10 stencils");
    eidx->push_back(row * n_x + col);
    for (int s = 0; s < S; ++s) {
      plan.gamma[e * S + s] = stencils[static_cast<size_t>(s)].gamma;
      sof->push_back(e);
      for (int r = 0; r < P; ++r) {
        auto [mr, mc] = stencils[static_cast<size_t>(s)].members[static_cast<size_t>(r)];
        int64_t period = mc >= 0 ? mc / n_x : -((-mc - 1) / n_x + 1);
        int64_t wrapped = mc - period * n_x;
        midx->push_back(mr * n_x + wrapped);
        mrep->push_back(row * n_x + col);
        plan.member_wrap[mw++] = static_cast<double>(period) * L;
      }
    }
    int64_t rcol = col + 1;
    plan.right_wrap[e] = rcol >= n_x ? L : 0.0;
    if (rcol >= n_x) rcol -= n_x;
    ridx->push_back(row * n_x + rcol);
    uidx->push_back((row + 1) * n_x + col);
  }
  plan.eval_idx = eidx;
  plan.member_idx = midx;
  plan.member_rep = mrep;
  plan.right_idx = ridx;
  plan.up_idx = uidx;
  plan.stencil_of = sof;
  for (int b = 0; b < kBasis; ++b) {
    auto cc = std::make_shared<std::vector<int64_t>>();
    for (int64_t k = 0; k < plan.m * S; ++k) cc->push_back(k * kBasis + b);
    plan.coeff_col[b] = cc;
  }
  return plan;
}

/// All interior grid points as evaluation points.
inline std::vector<std::pair<int64_t, int64_t>> interior_points(int64_t n_x, int64_t n_t) {
  std::vector<std::pair<int64_t, int64_t>> pts;
  for (int64_t r = 1; r + 1 < n_t; ++r)
    for (int64_t c = 0; c < n_x; ++c) pts.push_back({r, c});
  return pts;
}

/// Batched Vandermonde solve with implicit-rule backward. Inputs are the
/// 10 basis-column arrays and the member values, each [K*10].
class WenoSolveOp : public ad::CustomOp {
 public:
  WenoSolveOp(int64_t k, bool keep_factors) : k_(k), keep_(keep_factors) {}

  const char* name() const override { return "weno_solve"; }

  NdArray forward(std::span<const NdArray> cols, const NdArray& rhs) {
    NdArray out({k_ * kBasis});
    degenerate_.assign(static_cast<size_t>(k_), 0);
    if (keep_) {
      lu_.assign(static_cast<size_t>(k_ * kBasis * kBasis), 0.0);
      piv_.assign(static_cast<size_t>(k_ * kBasis), 0);
    }
    std::vector<double> a(kBasis * kBasis);
    std::vector<int> piv(kBasis);
    for (int64_t k = 0; k < k_; ++k) {
      for (int r = 0; r < kBasis; ++r)
        for (int c = 0; c < kBasis; ++c) a[static_cast<size_t>(r * kBasis + c)] =
            cols[static_cast<size_t>(c)][k * kBasis + r];
      bool ok = linalg::lu_factor(a.data(), piv.data(), kBasis) &&
                linalg::lu_diag_ratio(a.data(), kBasis) <= kCondLimit;
      if (!ok) {
        degenerate_[static_cast<size_t>(k)] = 1;
        for (int c = 0; c < kBasis; ++c) out[k * kBasis + c] = 0.0;
        continue;
      }
      double x[kBasis];
      for (int r = 0; r < kBasis; ++r) x[r] = rhs[k * kBasis + r];
      linalg::lu_solve(a.data(), piv.data(), kBasis, x);
      for (int c = 0; c < kBasis; ++c) out[k * kBasis + c] = x[c];
      if (keep_) {
        std::copy(a.begin(), a.end(), lu_.begin() + k * kBasis * kBasis);
        std::copy(piv.begin(), piv.end(), piv_.begin() + k * kBasis);
      }
    }
    return out;
  }

  void backward(std::span<const NdArray> inputs, const NdArray& out_val,
                const NdArray& out_adj,
                const std::function<double*(size_t)>& grad_of) override {
    require(keep_, "weno_solve: backward on a no-grad tape");
    double* rhs_adj = grad_of(kBasis);
    std::array<double*, kBasis> col_adj;
    for (int c = 0; c < kBasis; ++c) col_adj[static_cast<size_t>(c)] = grad_of(static_cast<size_t>(c));
    (void)inputs;
    for (int64_t k = 0; k < k_; ++k) {
      if (degenerate_[static_cast<size_t>(k)]) continue;
      const double* lu = lu_.data() + k * kBasis * kBasis;
      const int* piv = piv_.data() + k * kBasis;
      double lambda[kBasis];
      for (int r = 0; r < kBasis; ++r) lambda[r] = out_adj[k * kBasis + r];
      // lambda = A^{-T} cbar ; rhs_adj += lambda ; A_adj = -lambda x^T
      linalg::lu_solve_transposed(lu, piv, kBasis, lambda);
      for (int r = 0; r < kBasis; ++r) {
        rhs_adj[k * kBasis + r] += lambda[r];
        for (int c = 0; c < kBasis; ++c)
          col_adj[static_cast<size_t>(c)][k * kBasis + r] -=
              lambda[r] * out_val[k * kBasis + c];
      }
    }
  }

  const std::vector<uint8_t>& degenerate() const { return degenerate_; }

 private:
  int64_t k_;
  bool keep_;
  std::vector<uint8_t> degenerate_;
  std::vector<double> lu_;
  std::vector<int> piv_;
};

struct WenoDerivatives {
  std::map<DerivKey, ad::Var> deriv;  // physical derivatives at eval points, each [M]
  ad::Var u, x, t;                    // cloud values at eval points [M]
  ad::Var omega;                      // stencil weights [M*S] (exposed for checks)
};

/// Differentiable WENO derivatives of a deformed cloud at the plan's
/// evaluation points. xs/ts/us are flat [n_t*n_x] vars in physical
/// coordinates (x unwrapped).
inline WenoDerivatives weno_derivatives_on_tape(ad::Tape& tape, const WenoPlan& plan,
                                                ad::Var xs, ad::Var ts, ad::Var us,
                                                std::span<const DerivKey> which) {
  const int S = plan.n_stencils;
  const int64_t m = plan.m;
  const int64_t ms = m * S;

  // Member and evaluation-point coordinates.
  ad::Var xm = ad::add(ad::gather(xs, plan.member_idx), tape.constant(plan.member_wrap));
  ad::Var tm = ad::gather(ts, plan.member_idx);
  ad::Var um = ad::gather(us, plan.member_idx);
  ad::Var xe_rep = ad::gather(xs, plan.member_rep);
  ad::Var te_rep = ad::gather(ts, plan.member_rep);
  ad::Var xe = ad::gather(xs, plan.eval_idx);
  ad::Var te = ad::gather(ts, plan.eval_idx);
  ad::Var ue = ad::gather(us, plan.eval_idx);

  // Scaled centered offsets.
  ad::Var dx = ad::scalar_mul(ad::sub(xm, xe_rep), 1.0 / plan.hx);
  ad::Var dt = ad::scalar_mul(ad::sub(tm, te_rep), 1.0 / plan.ht);

  // Basis columns [M*S*P].
  std::array<ad::Var, kBasis> cols;
  {
    std::array<ad::Var, 5> xp;
    xp[0] = ad::add_const(ad::scalar_mul(dx, 0.0), 1.0);
    xp[1] = dx;
    xp[2] = ad::mul(dx, dx);
    xp[3] = ad::mul(xp[2], dx);
    xp[4] = ad::mul(xp[2], xp[2]);
    for (int i = 0; i < 5; ++i) {
      cols[static_cast<size_t>(basis_index(i, 0))] = xp[static_cast<size_t>(i)];
      cols[static_cast<size_t>(basis_index(i, 1))] =
          (i == 0) ? dt : ad::mul(xp[static_cast<size_t>(i)], dt);
    }
  }

  // Batched reconstruction solve.
  auto solve_op = std::make_unique<WenoSolveOp>(ms, tape.grad_enabled());
  std::vector<NdArray> col_vals;
  for (int c = 0; c < kBasis; ++c) col_vals.push_back(cols[static_cast<size_t>(c)].val());
  NdArray coeff_val = solve_op->forward(col_vals, um.val());
  const std::vector<uint8_t>& degenerate = solve_op->degenerate();
  {
    std::vector<int64_t> bad_count(static_cast<size_t>(m), 0);
    for (int64_t k = 0; k < ms; ++k)
      if (degenerate[static_cast<size_t>(k)]) bad_count[static_cast<size_t>(k / S)] += 1;
    for (int64_t e = 0; e < m; ++e)
      require_numeric(bad_count[static_cast<size_t>(e)] < S,
                      "weno: all stencils degenerate at evaluation point " +
                          std::to_string(e));
  }
  std::vector<ad::Var> solve_ins(cols.begin(), cols.end());
  solve_ins.push_back(um);
  ad::Var coeffs = ad::custom_op(tape, solve_ins, std::move(coeff_val), std::move(solve_op));

  // Cell extents (scaled) and volume.
  ad::Var ax = ad::scalar_mul(
      ad::sub(ad::add(ad::gather(xs, plan.right_idx), tape.constant(plan.right_wrap)), xe),
      1.0 / plan.hx);
  ad::Var at = ad::scalar_mul(ad::sub(ad::gather(ts, plan.up_idx), te), 1.0 / plan.ht);
  ad::Var axa = ad::abs(ax);
  ad::Var ata = ad::abs(at);
  for (int64_t e = 0; e < m; ++e)
    require_numeric(axa.val()[e] * ata.val()[e] > 0.0,
                    "weno smoothness: zero-volume cell at evaluation point " +
                        std::to_string(e));

  // Integrals IX_m = ax^{m+1}/(m+1), IT_n = at^{n+1}/(n+1), volume powers.
  std::array<ad::Var, 9> ix;
  std::array<ad::Var, 3> it;
  {
    ad::Var p = axa;
    for (int mm = 0; mm < 9; ++mm) {
      ix[static_cast<size_t>(mm)] = ad::scalar_mul(p, 1.0 / (mm + 1));
      if (mm < 8) p = ad::mul(p, axa);
    }
    ad::Var q = ata;
    for (int nn = 0; nn < 3; ++nn) {
      it[static_cast<size_t>(nn)] = ad::scalar_mul(q, 1.0 / (nn + 1));
      if (nn < 2) q = ad::mul(q, ata);
    }
  }
  ad::Var vol = ad::scalar_mul(ad::mul(axa, ata), plan.hx * plan.ht);
  std::array<ad::Var, 5> volp;  // vol^0..vol^4
  volp[0] = ad::add_const(ad::scalar_mul(vol, 0.0), 1.0);
  volp[1] = vol;
  for (int p = 2; p <= 4; ++p) volp[static_cast<size_t>(p)] = ad::mul(volp[static_cast<size_t>(p - 1)], vol);

  // Smoothness indicators: IS[k] = sum_{pairs} mult * c_b c_b' * W_{b,b'}(e).
  std::array<ad::Var, kBasis> coeff_cols;
  for (int b = 0; b < kBasis; ++b)
    coeff_cols[static_cast<size_t>(b)] = ad::gather(coeffs, plan.coeff_col[b]);

  ad::Var is_sum;
  for (int bi = 0; bi < kBasis; ++bi) {
    auto [i, j] = basis_exponent(bi);
    for (int bj = bi; bj < kBasis; ++bj) {
      auto [k, l] = basis_exponent(bj);
      // W_{bi,bj} over the evaluation points [M].
      ad::Var w;
      for (int a = 0; a <= std::min(i, k); ++a)
        for (int b = 0; b <= std::min(j, l); ++b) {
          if (a + b < 1) continue;
          // ix/it already carry the 1/(m+1) quadrature factors
          double scale = std::pow(plan.hx, 1 - 2 * a) * std::pow(plan.ht, 1 - 2 * b) *
                         falling(i, a) * falling(k, a) * falling(j, b) * falling(l, b);
          ad::Var term = ad::scalar_mul(
              ad::mul(volp[static_cast<size_t>(a + b - 1)],
                      ad::mul(ix[static_cast<size_t>(i + k - 2 * a)],
                              it[static_cast<size_t>(j + l - 2 * b)])),
              scale);
          w = w.defined() ? ad::add(w, term) : term;
        }
      if (!w.defined()) continue;  // (0,0) x (0,0)
      double mult = (bi == bj) ? 1.0 : 2.0;
      ad::Var w_rep = ad::gather(w, plan.stencil_of);
      ad::Var cc = ad::mul(coeff_cols[static_cast<size_t>(bi)], coeff_cols[static_cast<size_t>(bj)]);
      ad::Var term = ad::scalar_mul(ad::mul(cc, w_rep), mult);
      is_sum = is_sum.defined() ? ad::add(is_sum, term) : term;
    }
  }

  // Weights: gamma masked by degeneracy, alpha = gamma/(eps+IS)^4,
  // omega = alpha / sum over the point's stencils.
  NdArray gamma_eff = plan.gamma.deep_copy();
  for (int64_t k = 0; k < ms; ++k)
    if (degenerate[static_cast<size_t>(k)]) gamma_eff[k] = 0.0;
  ad::Var gam = tape.constant(std::move(gamma_eff));
  ad::Var denom = ad::pow_int(ad::add_const(is_sum, kEps), kExponentB);
  ad::Var alpha = ad::div(gam, denom);
  ad::Var alpha_sum = ad::sum_rows(ad::reshape(alpha, {m, S}));
  ad::Var omega = ad::div(alpha, ad::reshape(ad::repeat_cols(alpha_sum, S), {ms}));

  WenoDerivatives result;
  result.omega = omega;
  result.u = ue;
  result.x = xe;
  result.t = te;
  for (DerivKey key : which) {
    auto [a, b] = key;
    require(a >= 0 && a <= 4 && b >= 0 && b <= 1, "weno: derivative order outside basis");
    double fact = falling(a, a) * falling(b, b) /
                  (std::pow(plan.hx, a) * std::pow(plan.ht, b));
    ad::Var d_stencil = ad::mul(omega, coeff_cols[static_cast<size_t>(basis_index(a, b))]);
    ad::Var d = ad::scalar_mul(ad::sum_rows(ad::reshape(d_stencil, {m, S})), fact);
    result.deriv.emplace(key, d);
  }
  return result;
}

/// Convenience single-point derivative on a full-grid cloud (no tape
/// gradients); exercises exactly the batched pipeline.
inline double weno_derivative(const PointCloudSolution& cloud, int64_t row, int64_t col,
                              DerivKey key) {
  ad::Tape t;
  t.set_grad_enabled(false);
  std::pair<int64_t, int64_t> pt{row, col};
  auto plan = make_weno_plan(cloud.n_x, cloud.n_t, cloud.L, cloud.T, std::span(&pt, 1));
  auto xs = t.constant(cloud.xs);
  auto ts = t.constant(cloud.ts);
  auto us = t.constant(cloud.us);
  auto res = weno_derivatives_on_tape(t, plan, xs, ts, us, std::span(&key, 1));
  return res.deriv.at(key).val()[0];
}

}  // namespace symmflow::weno
