#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "symmflow/flow.hpp"
#include "symmflow/rng.hpp"

using namespace symmflow;
namespace ad = symmflow::ad;

namespace {

// Smooth bounded test field on (x,t,u).
std::array<double, 3> smooth_field(double x, double t, double u) {
  return {0.3 * std::sin(x) + 0.1 * u, 0.2 * std::cos(t + u), 0.25 * std::tanh(x - t)};
}

std::vector<std::array<double, 3>> random_points(Rng& rng, int n) {
  std::vector<std::array<double, 3>> pts(static_cast<size_t>(n));
  for (auto& p : pts) p = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(-1.5, 1.5)};
  return pts;
}

double dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("constant field gives an exact translation") {
  std::vector<std::array<double, 3>> pts = {{0.1, 0.2, 0.3}, {0.7, 0.5, -1.0}};
  flow_points_raw([](double, double, double) { return std::array<double, 3>{1.0, 0.0, 0.0}; },
                  pts, 0.3, 16);
  REQUIRE(pts[0][0] == Catch::Approx(0.4).margin(1e-14));
  REQUIRE(pts[0][1] == 0.2);
  REQUIRE(pts[0][2] == 0.3);
  REQUIRE(pts[1][0] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("zero scale is the identity") {
  std::vector<std::array<double, 3>> pts = {{0.4, 0.6, 1.2}};
  auto before = pts;
  flow_points_raw(smooth_field, pts, 0.0, 16);
  REQUIRE(pts[0] == before[0]);
}

TEST_CASE("linear field reproduces the exponential map") {
  // V(x) = x in the first coordinate: x(s) = x0 e^s
  std::vector<std::array<double, 3>> pts = {{1.0, 0.0, 0.0}, {0.5, 0.0, 0.0}};
  flow_points_raw([](double x, double, double) { return std::array<double, 3>{x, 0.0, 0.0}; },
                  pts, 0.2, 16);
  REQUIRE(std::fabs(pts[0][0] - std::exp(0.2)) < 1e-9);
  REQUIRE(std::fabs(pts[1][0] - 0.5 * std::exp(0.2)) < 1e-9);
}

TEST_CASE("group law and inverse on a smooth bounded field") {
  Rng rng(123);
  auto pts = random_points(rng, 100);
  for (int trial = 0; trial < 4; ++trial) {
    double s1 = rng.uniform(-0.4, 0.4);
    double s2 = rng.uniform(-0.4, 0.4) * (0.8 - std::fabs(s1)) / 0.8;
    auto a = pts;
    flow_points_raw(smooth_field, a, s1, 16);
    flow_points_raw(smooth_field, a, s2, 16);
    auto b = pts;
    flow_points_raw(smooth_field, b, s1 + s2, 16);
    for (size_t i = 0; i < pts.size(); ++i) REQUIRE(dist(a[i], b[i]) < 1e-6);

    auto c = pts;
    flow_points_raw(smooth_field, c, s1, 16);
    flow_points_raw(smooth_field, c, -s1, 16);
    for (size_t i = 0; i < pts.size(); ++i) REQUIRE(dist(c[i], pts[i]) < 1e-6);
  }
}

TEST_CASE("RK4 order: halving the step cuts the error ~16x") {
  std::vector<std::array<double, 3>> ref = {{0.3, 0.4, 0.5}};
  flow_points_raw(smooth_field, ref, 0.4, 4096);
  auto err_with = [&](int n_steps) {
    std::vector<std::array<double, 3>> p = {{0.3, 0.4, 0.5}};
    flow_points_raw(smooth_field, p, 0.4, n_steps);
    return dist(p[0], ref[0]);
  };
  double e4 = err_with(4), e8 = err_with(8), e16 = err_with(16);
  REQUIRE(e4 / e8 > 10.0);
  REQUIRE(e4 / e8 < 24.0);
  REQUIRE(e8 / e16 > 10.0);
  REQUIRE(e8 / e16 < 24.0);
}

TEST_CASE("bank: zero-initialized final head gives near-zero fields") {
  BankConfig cfg;
  cfg.n_sym = 2;
  GeneratorBank bank(cfg, 0);
  // zero the final head layers entirely
  auto& p = bank.params();
  GeneratorBank fresh(cfg, 0);
  // evaluate: outputs are bounded by the 1e-3 noise of the last layer
  std::vector<double> pts = {0.1, 0.2, 0.3, 0.8, 0.5, -0.4};
  std::vector<double> out(6);
  bank.eval_raw(0, pts.data(), 2, out.data());
  for (double v : out) REQUIRE(std::fabs(v) < 0.1);
  (void)p;
  (void)fresh;
}

TEST_CASE("bank: batched evaluation is deterministic and matches per-point") {
  GeneratorBank bank(BankConfig{}, 3);
  Rng rng(9);
  std::vector<double> pts(30);
  for (auto& v : pts) v = rng.uniform(-1.0, 1.0);
  std::vector<double> batched(30), batched2(30);
  bank.eval_raw(1, pts.data(), 10, batched.data());
  bank.eval_raw(1, pts.data(), 10, batched2.data());
  REQUIRE(batched == batched2);  // same shape => bit-identical
  for (int i = 0; i < 10; ++i) {
    // different dgemm shapes may associate reductions differently, so
    // per-point agreement is at ulp level rather than bitwise
    std::vector<double> one(3);
    bank.eval_raw(1, pts.data() + 3 * i, 1, one.data());
    for (int j = 0; j < 3; ++j)
      REQUIRE(one[j] == Catch::Approx(batched[3 * i + j]).epsilon(1e-13).margin(1e-300));
  }
  std::vector<double> out(30);
  REQUIRE_THROWS_AS(bank.eval_raw(7, pts.data(), 10, out.data()), ValidationError);
}

TEST_CASE("bank outputs are finite on the working box") {
  GeneratorBank bank(BankConfig{}, 1);
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    double p[3] = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(-3.0, 3.0)};
    double out[3];
    bank.eval_raw(trial % 4, p, 1, out);
    for (double v : out) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("on-tape flow matches the raw flow and has correct gradients") {
  BankConfig cfg;
  cfg.trunk_width = 16;
  cfg.head_width = 8;
  cfg.n_sym = 2;
  GeneratorBank bank(cfg, 7);
  // make the field non-trivial
  Rng noise(21);
  for (auto& w : bank.params()) w += 0.05 * noise.uniform(-1.0, 1.0);

  std::vector<SlotBlock> blocks = {{0, 3}, {1, 2}};
  std::vector<double> scales = {0.3, -0.25};
  NdArray p0({5, 3});
  Rng rng(2);
  for (int64_t i = 0; i < p0.numel(); ++i) p0[i] = rng.uniform(-0.5, 0.8);

  // raw reference
  std::vector<double> raw0(p0.data(), p0.data() + 9);
  std::vector<double> raw1(p0.data() + 9, p0.data() + 15);
  flow_slot_raw(bank, 0, raw0, 0.3, 8);
  flow_slot_raw(bank, 1, raw1, -0.25, 8);

  ad::Tape t;
  auto theta = bank.declare_theta(t);
  auto pts = t.constant(p0);
  auto flowed = flow_blocks_on_tape(t, bank, theta, pts, blocks, scales, 8);
  for (int64_t i = 0; i < 9; ++i)
    REQUIRE(flowed.val()[i] == Catch::Approx(raw0[static_cast<size_t>(i)]).margin(1e-13));
  for (int64_t i = 0; i < 6; ++i)
    REQUIRE(flowed.val()[9 + i] == Catch::Approx(raw1[static_cast<size_t>(i)]).margin(1e-13));

  // gradient of a scalar functional of the flowed points wrt theta
  auto loss_fn = [&](ad::Tape& tt, ad::Var th) {
    auto pp = tt.constant(p0);
    auto fl = flow_blocks_on_tape(tt, bank, th, pp, blocks, scales, 4);
    return ad::sum(ad::mul(fl, fl));
  };
  std::vector<int64_t> coords;
  Rng pick(77);
  for (int i = 0; i < 40; ++i)
    coords.push_back(pick.uniform_int(0, bank.param_count() - 1));
  double err = ad::gradient_check(loss_fn, bank.params(), 1e-5, coords);
  REQUIRE(err < 1e-5);
}

TEST_CASE("gradient flows to points through the flow") {
  BankConfig cfg;
  cfg.trunk_width = 12;
  cfg.head_width = 6;
  cfg.n_sym = 1;
  GeneratorBank bank(cfg, 5);
  Rng noise(31);
  for (auto& w : bank.params()) w += 0.05 * noise.uniform(-1.0, 1.0);

  auto fn = [&](ad::Tape& t, ad::Var p) {
    auto theta = bank.declare_theta(t);
    auto pts = ad::reshape(p, {2, 3});
    auto fl = flow_blocks_on_tape(t, bank, theta, pts, {{0, 2}}, {0.35}, 6);
    return ad::sum(ad::mul(fl, fl));
  };
  std::vector<double> p = {0.1, 0.4, -0.2, 0.8, 0.2, 0.5};
  REQUIRE(ad::gradient_check(fn, p) < 1e-6);
}

TEST_CASE("checkpoint save/load roundtrip") {
  GeneratorBank bank(BankConfig{}, 11);
  Normalization norm;
  norm.L = 64.0;
  norm.T = 40.0;
  norm.u_offset = 0.12;
  norm.u_scale = 3.4;
  auto dir = std::filesystem::temp_directory_path() / "symmflow_ckpt_test";
  bank.save(dir, norm);
  Normalization norm2;
  GeneratorBank loaded = GeneratorBank::load(dir, &norm2);
  REQUIRE(loaded.params() == bank.params());
  REQUIRE(norm2.L == norm.L);
  REQUIRE(norm2.u_scale == norm.u_scale);
  std::filesystem::remove_all(dir);
}
