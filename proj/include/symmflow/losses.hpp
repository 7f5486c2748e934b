#pragma once

// Training objectives: WENO-based validity score, symmetry loss with the
// log trick, orthonormality with stop-gradient, Lipschitz hinge, Sobolev
// penalty, and the weighted total.

#include <map>
#include <string>
#include <vector>

#include "symmflow/flow.hpp"
#include "symmflow/network.hpp"
#include "symmflow/pde.hpp"
#include "symmflow/weno.hpp"

namespace symmflow {

struct LossWeights {
  double w_sym = 1.0;
  double w_ortho = 3.0;
  double w_lips = 1.0;
  double tau = 3.0;      // Lipschitz threshold
  double sigma = 0.4;    // transformation-scale bound
  int n_sym = 4;
  double w_sobolev = 1.0;  // active during the final epochs only
  double delta = 1e-12;    // floor inside log(S + delta)
};

// ---------------------------------------------------------------------------
// Residual assembly on tape

struct TapeTerms {
  std::vector<std::pair<std::string, ad::Var>> terms;  // named, each [M]
  ad::Var residual;                                    // sum of terms [M]
};

/// Pointwise named residual terms from WENO derivatives (physical
/// coordinates). Mirrors residual_terms(); the formulas live in both
/// places because one acts on doubles and the other on tape arrays.
inline TapeTerms residual_terms_on_tape(const PdeSpec& spec, const weno::WenoDerivatives& d) {
  TapeTerms out;
  auto dv = [&](int a, int b) { return d.deriv.at({a, b}); };
  switch (spec.eq) {
    case Equation::Kdv:
      out.terms = {{"u_t", dv(0, 1)},
                   {"u*u_x", ad::mul(d.u, dv(1, 0))},
                   {"u_xxx", dv(3, 0)}};
      break;
    case Equation::Ks:
      out.terms = {{"u_t", dv(0, 1)},
                   {"u_xx", dv(2, 0)},
                   {"u_xxxx", dv(4, 0)},
                   {"u*u_x", ad::mul(d.u, dv(1, 0))}};
      break;
    case Equation::Burgers:
      out.terms = {{"u_t", dv(0, 1)},
                   {"u*u_x", ad::mul(d.u, dv(1, 0))},
                   {"-nu*u_xx", ad::scalar_mul(dv(2, 0), -spec.nu)}};
      break;
    case Equation::Nkdv:
      out.terms = {{"exp(-t/t0)*u_t",
                    ad::mul(ad::exp(ad::scalar_mul(d.t, -1.0 / spec.t0)), dv(0, 1))},
                   {"u*u_x", ad::mul(d.u, dv(1, 0))},
                   {"u_xxx", dv(3, 0)}};
      break;
    case Equation::Ckdv: {
      for (int64_t i = 0; i < d.t.numel(); ++i)
        require_numeric(d.t.val()[i] > -1.0,
                        "ckdv residual: transformed t reached the t <= -1 domain edge");
      out.terms = {{"u_t", dv(0, 1)},
                   {"u*u_x", ad::mul(d.u, dv(1, 0))},
                   {"u_xxx", dv(3, 0)},
                   {"u/(2(t+1))",
                    ad::div(d.u, ad::add_const(ad::scalar_mul(d.t, 2.0), 2.0))}};
      break;
    }
  }
  ad::Var r = out.terms[0].second;
  for (size_t i = 1; i < out.terms.size(); ++i) r = ad::add(r, out.terms[i].second);
  out.residual = r;
  return out;
}

/// Validity score on tape: sum of |residual| over the plan's evaluation
/// points.
inline ad::Var validity_score_on_tape(ad::Tape& t, const PdeSpec& spec,
                                      const weno::WenoPlan& plan, ad::Var xs, ad::Var ts,
                                      ad::Var us) {
  std::vector<DerivKey> keys = spec.required_derivatives();
  auto d = weno::weno_derivatives_on_tape(t, plan, xs, ts, us, keys);
  auto terms = residual_terms_on_tape(spec, d);
  return ad::sum(ad::abs(terms.residual));
}

// ---------------------------------------------------------------------------
// No-grad scoring of point clouds (chunked over evaluation points)

struct ScoreBreakdown {
  double total = 0.0;
  int64_t points = 0;
  // per-term |values| at each evaluation point, in eval-point order
  std::map<std::string, std::vector<double>> term_values;
};

/// S(cloud) = sum_i |Delta_i| over interior evaluation points, with
/// optional per-term values for attribution. Chunked to bound memory.
inline ScoreBreakdown validity_score_detailed(const PdeSpec& spec,
                                              const PointCloudSolution& cloud,
                                              bool keep_terms = false,
                                              int64_t chunk = 4096) {
  auto pts = weno::interior_points(cloud.n_x, cloud.n_t);
  ScoreBreakdown out;
  out.points = static_cast<int64_t>(pts.size());
  std::vector<double> partials;
  for (size_t lo = 0; lo < pts.size(); lo += static_cast<size_t>(chunk)) {
    size_t hi = std::min(pts.size(), lo + static_cast<size_t>(chunk));
    std::span<const std::pair<int64_t, int64_t>> sub(pts.data() + lo, hi - lo);
    ad::Tape t;
    t.set_grad_enabled(false);
    auto plan = weno::make_weno_plan(cloud.n_x, cloud.n_t, cloud.L, cloud.T, sub);
    auto xs = t.constant(cloud.xs);
    auto ts = t.constant(cloud.ts);
    auto us = t.constant(cloud.us);
    std::vector<DerivKey> keys = spec.required_derivatives();
    auto d = weno::weno_derivatives_on_tape(t, plan, xs, ts, us, keys);
    auto terms = residual_terms_on_tape(spec, d);
    partials.push_back(ad::sum(ad::abs(terms.residual)).scalar());
    if (keep_terms)
      for (auto& [name, var] : terms.terms) {
        auto& dst = out.term_values[name];
        for (int64_t i = 0; i < var.numel(); ++i) dst.push_back(var.val()[i]);
      }
  }
  out.total = pairwise_sum(partials.data(), static_cast<int64_t>(partials.size()));
  return out;
}

inline double validity_score(const PdeSpec& spec, const PointCloudSolution& cloud) {
  return validity_score_detailed(spec, cloud).total;
}

// ---------------------------------------------------------------------------
// Quadrature inner products over a point-cloud context

/// Quadrature context: a grid of (x,t,u) tuples with a weight function
/// (identically 1 in the PDE setting).
struct InnerProductContext {
  std::vector<std::array<double, 3>> points;  // normalized coordinates
};

inline InnerProductContext make_context(std::span<const SolutionBundle> bundles,
                                        const Normalization& norm) {
  InnerProductContext ctx;
  for (const auto& b : bundles)
    for (int64_t r = 0; r < b.n_t; ++r)
      for (int64_t j = 0; j < b.n_x; ++j)
        ctx.points.push_back({norm.norm_x(b.x(j)), norm.norm_t(b.t(r)),
                              norm.norm_u(b.u.at(r, j))});
  require(!ctx.points.empty(), "inner-product context is empty");
  return ctx;
}

using NormalizedField = std::function<std::array<double, 3>(double, double, double)>;

/// <V1,V2> = (1/|ctx|) sum_i V1(z_i) . V2(z_i)   (weight w == 1)
inline double inner_product(const NormalizedField& v1, const NormalizedField& v2,
                            const InnerProductContext& ctx) {
  std::vector<double> dots;
  dots.reserve(ctx.points.size());
  for (const auto& p : ctx.points) {
    auto a = v1(p[0], p[1], p[2]);
    auto b = v2(p[0], p[1], p[2]);
    dots.push_back(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
  }
  return pairwise_sum(dots.data(), static_cast<int64_t>(dots.size())) /
         static_cast<double>(dots.size());
}

inline double field_norm(const NormalizedField& v, const InnerProductContext& ctx) {
  return std::sqrt(std::max(inner_product(v, v, ctx), 0.0));
}

/// Sampled field values of one bank slot on the context points.
inline NormalizedField bank_field(const GeneratorBank& bank, int slot) {
  return [&bank, slot](double x, double t, double u) {
    double p[3] = {x, t, u};
    std::array<double, 3> out;
    bank.eval_raw(slot, p, 1, out.data());
    return out;
  };
}

// ---------------------------------------------------------------------------
// On-tape regularizers over a sampled context

/// mean over points of the rowwise dot product of two [N,3] vars.
inline ad::Var mean_dot(ad::Var a, ad::Var b) {
  return ad::scalar_mul(ad::sum(ad::mul(a, b)), 3.0 / static_cast<double>(a.numel()));
}

/// Orthonormality loss: sum_{a<b} asin(|<sg(h_a_hat), h_b_hat>|).
/// Each slot is normalized by its quadrature norm; the stop-gradient on
/// the earlier slot makes each pair constrain only the later one.
inline ad::Var orthonormality_loss(ad::Tape& t, std::span<const ad::Var> slot_fields) {
  size_t n = slot_fields.size();
  std::vector<ad::Var> norms(n);
  for (size_t a = 0; a < n; ++a) {
    norms[a] = ad::sqrt(mean_dot(slot_fields[a], slot_fields[a]));
    require_numeric(norms[a].scalar() > 0.0,
                    "orthonormality_loss: zero-norm generator in slot " + std::to_string(a));
  }
  ad::Var total;
  for (size_t a = 0; a < n; ++a) {
    ad::Var a_hat_sg = ad::stop_gradient(ad::div_by(slot_fields[a], norms[a]));
    for (size_t b = a + 1; b < n; ++b) {
      ad::Var ip = ad::div_by(mean_dot(a_hat_sg, slot_fields[b]), norms[b]);
      ad::Var term = ad::asin(ad::abs(ip));
      total = total.defined() ? ad::add(total, term) : term;
    }
  }
  return total;
}

/// Neighbor pairs for the Lipschitz loss with precomputed inverse
/// distances in the normalized (x,t,u) embedding.
struct LipschitzPairs {
  std::shared_ptr<std::vector<int64_t>> idx_i, idx_j;  // [Np*3] row gathers
  NdArray inv_dist;                                    // [Np]
  int64_t count = 0;
};

/// Pairs are 4-neighborhoods in the logical grid restricted to `points`
/// (right and up neighbors, so each adjacent pair appears once).
inline LipschitzPairs make_lipschitz_pairs(
    std::span<const std::array<double, 3>> coords,
    std::span<const std::pair<int64_t, int64_t>> grid_pos, int64_t n_x, int64_t n_t) {
  std::map<std::pair<int64_t, int64_t>, int64_t> where;
  for (size_t i = 0; i < grid_pos.size(); ++i) where[grid_pos[i]] = static_cast<int64_t>(i);
  auto ii = std::make_shared<std::vector<int64_t>>();
  auto jj = std::make_shared<std::vector<int64_t>>();
  std::vector<double> inv;
  for (size_t i = 0; i < grid_pos.size(); ++i) {
    auto [r, c] = grid_pos[i];
    for (auto [dr, dc] : {std::pair<int64_t, int64_t>{0, 1}, {1, 0}}) {
      int64_t rr = r + dr, cc = c + dc;
      if (cc == n_x) cc = 0;
      if (rr >= n_t) continue;
      auto it = where.find({rr, cc});
      if (it == where.end()) continue;
      int64_t j = it->second;
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        double d = coords[i][static_cast<size_t>(k)] -
                   coords[static_cast<size_t>(j)][static_cast<size_t>(k)];
        d2 += d * d;
      }
      if (d2 < 1e-24) continue;  // coincident points: pair skipped
      for (int k = 0; k < 3; ++k) {
        ii->push_back(static_cast<int64_t>(3 * i + k));
        jj->push_back(3 * j + k);
      }
      inv.push_back(1.0 / std::sqrt(d2));
    }
  }
  LipschitzPairs p;
  p.idx_i = ii;
  p.idx_j = jj;
  p.inv_dist = NdArray::from(inv);
  p.count = static_cast<int64_t>(inv.size());
  return p;
}

/// Lipschitz loss of one normalized slot field over the pairs:
/// sum_pairs max(||V(p_i)-V(p_j)|| / ||p_i-p_j|| - tau, 0).
inline ad::Var lipschitz_loss(ad::Tape& t, ad::Var field_hat, const LipschitzPairs& pairs,
                              double tau) {
  if (pairs.count == 0) return t.constant(NdArray::scalar(0.0));
  ad::Var flat = ad::reshape(field_hat, {field_hat.numel()});
  ad::Var vi = ad::reshape(ad::gather(flat, pairs.idx_i), {pairs.count, 3});
  ad::Var vj = ad::reshape(ad::gather(flat, pairs.idx_j), {pairs.count, 3});
  ad::Var d = ad::sub(vi, vj);
  ad::Var dist = ad::sqrt(ad::sum_rows(ad::mul(d, d)));
  ad::Var lips = ad::mul(dist, t.constant(pairs.inv_dist));
  return ad::sum(ad::hinge(lips, tau));
}

// ---------------------------------------------------------------------------
// Sobolev penalty (order 2, x-domain, zeroth order excluded)

struct SobolevPlan {
  int64_t n_x = 0;
  int64_t rows = 0;
  NdArray cos_table, sin_table;  // [N_x, N_x] DFT matrices
  NdArray weights;               // [N_x]: (1 + n_freq/L)^2 - 1
};

inline SobolevPlan make_sobolev_plan(int64_t n_x, int64_t rows, double L) {
  SobolevPlan p;
  p.n_x = n_x;
  p.rows = rows;
  p.cos_table = NdArray({n_x, n_x});
  p.sin_table = NdArray({n_x, n_x});
  p.weights = NdArray({n_x});
  for (int64_t j = 0; j < n_x; ++j)
    for (int64_t n = 0; n < n_x; ++n) {
      double arg = 2.0 * M_PI * static_cast<double>(j) * static_cast<double>(n) /
                   static_cast<double>(n_x);
      p.cos_table.at(j, n) = std::cos(arg);
      p.sin_table.at(j, n) = std::sin(arg);
    }
  for (int64_t n = 0; n < n_x; ++n) {
    double n_freq = static_cast<double>(std::min(n, n_x - n));
    double w = (1.0 + n_freq / L) * (1.0 + n_freq / L) - 1.0;
    p.weights[n] = w;
  }
  return p;
}

/// Penalty of one component sampled on `rows` full x-lines, [rows, N_x]:
/// sum over rows of (1/N^2) sum_n w_n |DFT(V)(n)|^2. With this scaling a
/// single sine mode of amplitude A at index l contributes w_l A^2 / 2
/// per row.
inline ad::Var sobolev_component(ad::Tape& t, const SobolevPlan& plan, ad::Var rows_var) {
  ad::Var re = ad::matmul(rows_var, t.constant(plan.cos_table));
  ad::Var im = ad::matmul(rows_var, t.constant(plan.sin_table));
  ad::Var power = ad::add(ad::mul(re, re), ad::mul(im, im));
  NdArray wmat({plan.rows, plan.n_x});
  for (int64_t r = 0; r < plan.rows; ++r)
    for (int64_t n = 0; n < plan.n_x; ++n) wmat.at(r, n) = plan.weights[n];
  ad::Var weighted = ad::mul(power, t.constant(std::move(wmat)));
  return ad::scalar_mul(ad::sum(weighted),
                        1.0 / (static_cast<double>(plan.n_x) * static_cast<double>(plan.n_x)));
}

/// Total loss: w_sym L_sym + w_ortho L_ortho + w_lips L_lips (+ sobolev
/// when scheduled). Pass undefined Vars to drop a component.
inline ad::Var total_loss(ad::Tape& t, const LossWeights& w, ad::Var l_sym, ad::Var l_ortho,
                          ad::Var l_lips, ad::Var l_sobolev) {
  ad::Var total = t.constant(NdArray::scalar(0.0));
  if (l_sym.defined()) total = ad::add(total, ad::scalar_mul(l_sym, w.w_sym));
  if (l_ortho.defined()) total = ad::add(total, ad::scalar_mul(l_ortho, w.w_ortho));
  if (l_lips.defined()) total = ad::add(total, ad::scalar_mul(l_lips, w.w_lips));
  if (l_sobolev.defined()) total = ad::add(total, ad::scalar_mul(l_sobolev, w.w_sobolev));
  return total;
}

}  // namespace symmflow
