#pragma once

// One-parameter-group transport: classical fixed-step RK4 along a vector
// field, jointly over all points. Negative scales integrate the negated
// field, which for RK4 is algebraically identical to stepping with a
// negative step size.

#include <array>
#include <functional>
#include <vector>

#include "symmflow/bundle.hpp"
#include "symmflow/network.hpp"
#include "symmflow/tape.hpp"

namespace symmflow {

struct FlowConfig {
  double sigma = 0.4;  // transformation-scale bound
  int n_steps = 16;    // RK4 steps per flow
};

using FieldFn = std::function<std::array<double, 3>(double x, double t, double u)>;

/// RK4 flow of a closed-form field, point by point. Points are (x,t,u)
/// triples in whatever coordinates the field expects.
inline void flow_points_raw(const FieldFn& v, std::vector<std::array<double, 3>>& pts,
                            double s, int n_steps) {
  require(n_steps >= 1, "flow_points: n_steps must be >= 1");
  if (s == 0.0) return;
  double h = s / n_steps;
  auto at = [&](const std::array<double, 3>& p) { return v(p[0], p[1], p[2]); };
  for (auto& p : pts) {
    for (int step = 0; step < n_steps; ++step) {
      auto k1 = at(p);
      std::array<double, 3> q;
      for (int i = 0; i < 3; ++i) q[i] = p[i] + 0.5 * h * k1[i];
      auto k2 = at(q);
      for (int i = 0; i < 3; ++i) q[i] = p[i] + 0.5 * h * k2[i];
      auto k3 = at(q);
      for (int i = 0; i < 3; ++i) q[i] = p[i] + h * k3[i];
      auto k4 = at(q);
      for (int i = 0; i < 3; ++i) {
        p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        require_numeric(std::isfinite(p[i]),
                        "flow_points: non-finite state at step " + std::to_string(step));
      }
    }
  }
}

/// RK4 flow of bank slots on a tape. `points0` is a [n,3] var in
/// normalized coordinates; rows are partitioned into `blocks`, each
/// flowed by its own signed scale. Gradients reach theta through every
/// stage.
inline ad::Var flow_blocks_on_tape(ad::Tape& t, const GeneratorBank& bank, ad::Var theta,
                                   ad::Var points0, const std::vector<SlotBlock>& blocks,
                                   const std::vector<double>& scales, int n_steps) {
  require(n_steps >= 1, "flow_blocks: n_steps must be >= 1");
  require(blocks.size() == scales.size(), "flow_blocks: one scale per block");
  int64_t n = points0.dims()[0];

  NdArray hs({n, 3});
  int64_t row = 0;
  for (size_t b = 0; b < blocks.size(); ++b) {
    double h = scales[b] / n_steps;
    for (int64_t i = 0; i < blocks[b].count; ++i)
      for (int64_t j = 0; j < 3; ++j) hs.at(row + i, j) = h;
    row += blocks[b].count;
  }
  require(row == n, "flow_blocks: blocks must cover all point rows");
  ad::Var h_arr = t.constant(std::move(hs));

  ad::Var p = points0;
  for (int step = 0; step < n_steps; ++step) {
    ad::Var k1 = bank.eval_on_tape(t, theta, p, blocks);
    ad::Var hk1 = ad::mul(k1, h_arr);
    ad::Var k2 = bank.eval_on_tape(t, theta, ad::add(p, ad::scalar_mul(hk1, 0.5)), blocks);
    ad::Var hk2 = ad::mul(k2, h_arr);
    ad::Var k3 = bank.eval_on_tape(t, theta, ad::add(p, ad::scalar_mul(hk2, 0.5)), blocks);
    ad::Var hk3 = ad::mul(k3, h_arr);
    ad::Var k4 = bank.eval_on_tape(t, theta, ad::add(p, hk3), blocks);
    ad::Var hk4 = ad::mul(k4, h_arr);
    ad::Var incr = ad::scalar_mul(
        ad::add(ad::add(hk1, hk4), ad::scalar_mul(ad::add(hk2, hk3), 2.0)), 1.0 / 6.0);
    p = ad::add(p, incr);
    require_numeric(p.val().all_finite(),
                    "flow_blocks: non-finite state at step " + std::to_string(step));
  }
  return p;
}

/// Raw (no-tape) RK4 flow of one bank slot on normalized points [n,3].
inline void flow_slot_raw(const GeneratorBank& bank, int slot, std::vector<double>& pts,
                          double s, int n_steps) {
  require(n_steps >= 1, "flow_points: n_steps must be >= 1");
  int64_t n = static_cast<int64_t>(pts.size()) / 3;
  if (s == 0.0 || n == 0) return;
  double h = s / n_steps;
  std::vector<double> k1(pts.size()), k2(pts.size()), k3(pts.size()), k4(pts.size()),
      q(pts.size());
  for (int step = 0; step < n_steps; ++step) {
    bank.eval_raw(slot, pts.data(), n, k1.data());
    for (size_t i = 0; i < pts.size(); ++i) q[i] = pts[i] + 0.5 * h * k1[i];
    bank.eval_raw(slot, q.data(), n, k2.data());
    for (size_t i = 0; i < pts.size(); ++i) q[i] = pts[i] + 0.5 * h * k2[i];
    bank.eval_raw(slot, q.data(), n, k3.data());
    for (size_t i = 0; i < pts.size(); ++i) q[i] = pts[i] + h * k3[i];
    bank.eval_raw(slot, q.data(), n, k4.data());
    for (size_t i = 0; i < pts.size(); ++i) {
      pts[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      require_numeric(std::isfinite(pts[i]),
                      "flow_points: non-finite state at step " + std::to_string(step));
    }
  }
}

/// Transformed tuples retaining the source grid's logical topology.
/// Coordinates are physical; x is stored unwrapped.
struct PointCloudSolution {
  int64_t n_x = 0;
  int64_t n_t = 0;
  NdArray xs, ts, us;  // each [n_t * n_x], logical index r * n_x + c
  std::string equation;
  double L = 0.0, T = 0.0;
  int slot = -1;
  double scale = 0.0;

  int64_t grid_size() const { return n_x * n_t; }
};

inline PointCloudSolution identity_cloud(const SolutionBundle& b) {
  PointCloudSolution c;
  c.n_x = b.n_x;
  c.n_t = b.n_t;
  c.equation = b.equation;
  c.L = b.L;
  c.T = b.T;
  c.xs = NdArray({b.grid_size()});
  c.ts = NdArray({b.grid_size()});
  c.us = NdArray({b.grid_size()});
  for (int64_t r = 0; r < b.n_t; ++r)
    for (int64_t j = 0; j < b.n_x; ++j) {
      int64_t g = r * b.n_x + j;
      c.xs[g] = b.x(j);
      c.ts[g] = b.t(r);
      c.us[g] = b.u.at(r, j);
    }
  return c;
}

/// Flow every grid tuple of a bundle along a closed-form physical field.
/// Uses the exact map when the field carries one, RK4 otherwise.
inline PointCloudSolution transform_solution(const GeneratorField& field,
                                             const SolutionBundle& b, double s,
                                             int n_steps = 16) {
  PointCloudSolution c = identity_cloud(b);
  if (s == 0.0) return c;
  if (field.exact_map) {
    for (int64_t g = 0; g < c.grid_size(); ++g) {
      auto p = field.exact_map(c.xs[g], c.ts[g], c.us[g], s);
      c.xs[g] = p[0];
      c.ts[g] = p[1];
      c.us[g] = p[2];
    }
  } else {
    std::vector<std::array<double, 3>> pts(static_cast<size_t>(c.grid_size()));
    for (int64_t g = 0; g < c.grid_size(); ++g)
      pts[static_cast<size_t>(g)] = {c.xs[g], c.ts[g], c.us[g]};
    flow_points_raw(field.comps ? FieldFn([&field](double x, double t, double u) {
      return field.comps(x, t, u);
    }) : FieldFn{}, pts, s, n_steps);
    for (int64_t g = 0; g < c.grid_size(); ++g) {
      c.xs[g] = pts[static_cast<size_t>(g)][0];
      c.ts[g] = pts[static_cast<size_t>(g)][1];
      c.us[g] = pts[static_cast<size_t>(g)][2];
    }
  }
  c.scale = s;
  return c;
}

/// Flow every grid tuple along one learned slot (no tape). The flow runs
/// in normalized coordinates; the returned cloud is physical.
inline PointCloudSolution transform_solution(const GeneratorBank& bank, int slot,
                                             const SolutionBundle& b,
                                             const Normalization& norm, double s,
                                             int n_steps = 16) {
  PointCloudSolution c = identity_cloud(b);
  std::vector<double> pts(static_cast<size_t>(c.grid_size() * 3));
  for (int64_t g = 0; g < c.grid_size(); ++g) {
    pts[static_cast<size_t>(3 * g + 0)] = norm.norm_x(c.xs[g]);
    pts[static_cast<size_t>(3 * g + 1)] = norm.norm_t(c.ts[g]);
    pts[static_cast<size_t>(3 * g + 2)] = norm.norm_u(c.us[g]);
  }
  flow_slot_raw(bank, slot, pts, s, n_steps);
  for (int64_t g = 0; g < c.grid_size(); ++g) {
    c.xs[g] = norm.denorm_x(pts[static_cast<size_t>(3 * g + 0)]);
    c.ts[g] = norm.denorm_t(pts[static_cast<size_t>(3 * g + 1)]);
    c.us[g] = norm.denorm_u(pts[static_cast<size_t>(3 * g + 2)]);
  }
  c.slot = slot;
  c.scale = s;
  return c;
}

}  // namespace symmflow
