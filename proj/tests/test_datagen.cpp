#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "symmflow/datagen.hpp"
#include "symmflow/oracles.hpp"

using namespace symmflow;
namespace fs = std::filesystem;

TEST_CASE("random fourier IC: single mode matches the formula") {
  auto row = random_fourier_ic(/*seed=*/0, /*P=*/1, /*L=*/1.0, 1.0, 1.0, 2, 2, 64);
  // amplitude and wavenumber pinned by the degenerate ranges; phase is
  // whatever the seed draws, so compare against the drawn phase.
  Rng rng = Rng::derive(0, 0x1c0de);
  auto ic = draw_fourier_ic(rng, 1, 1.0, 1.0, 2, 2);
  REQUIRE(ic.wavenumbers[0] == 2);
  for (int j = 0; j < 64; ++j) {
    double x = j / 64.0;
    REQUIRE(row[j] == Catch::Approx(std::sin(4.0 * M_PI * x + ic.phases[0])).margin(1e-14));
  }
}

TEST_CASE("random fourier IC: deterministic and band-limited") {
  auto a = random_fourier_ic(7, 10, 64.0, -0.5, 0.5, 1, 8, 256);
  auto b = random_fourier_ic(7, 10, 64.0, -0.5, 0.5, 1, 8, 256);
  REQUIRE(a == b);
  REQUIRE(oracle::max_active_wavenumber(a) <= 8);
  REQUIRE_THROWS_AS(random_fourier_ic(7, 10, 64.0, -0.5, 0.5, 1, 8, 255), ValidationError);
}

TEST_CASE("spectral derivative: analytic oracle") {
  int n = 256;
  double L = 64.0;
  std::vector<double> u(n), d1(n), d4(n);
  for (int j = 0; j < n; ++j) {
    double x = L * j / n;
    u[j] = std::sin(2.0 * M_PI * x / L);
    d1[j] = (2.0 * M_PI / L) * std::cos(2.0 * M_PI * x / L);
    d4[j] = std::pow(2.0 * M_PI / L, 4) * std::sin(2.0 * M_PI * x / L);
  }
  auto g1 = spectral_derivative(u, 1, L);
  auto g4 = spectral_derivative(u, 4, L);
  for (int j = 0; j < n; ++j) {
    REQUIRE(std::fabs(g1[j] - d1[j]) < 1e-10);
    REQUIRE(std::fabs(g4[j] - d4[j]) < 1e-8);
  }
  std::vector<double> c(n, 3.14);
  auto gc = spectral_derivative(c, 1, L);
  for (int j = 0; j < n; ++j) REQUIRE(std::fabs(gc[j]) < 1e-12);
}

TEST_CASE("heat backbone matches the analytic decay of a cosine mode") {
  int n = 128;
  double L = 16.0, nu = 0.3, T = 10.0;
  std::vector<double> phi0(n);
  for (int j = 0; j < n; ++j) phi0[j] = std::cos(2.0 * M_PI * (L * j / n) / L);
  auto b = evolve_heat(phi0, nu, L, 11, T, 0.002);
  double k = 2.0 * M_PI / L;
  for (int64_t i = 0; i < b.n_t; ++i) {
    double decay = std::exp(-nu * k * k * b.t(i));
    for (int j = 0; j < n; ++j) {
      double expect = decay * std::cos(k * b.x(j));
      REQUIRE(std::fabs(b.u.at(i, j) - expect) < 1e-6);
    }
  }
}

TEST_CASE("T=0, N_t=1 returns the initial condition") {
  PdeSpec spec = make_pde_spec(Equation::Kdv);
  auto u0 = random_fourier_ic(3, spec.ic_modes, spec.L, -0.5, 0.5, 1, 8, 128);
  auto b = evolve(spec, u0, 1, 0.0);
  REQUIRE(b.n_t == 1);
  for (int j = 0; j < 128; ++j) REQUIRE(b.u.at(0, j) == u0[j]);
}

// The stored-grid residual check is limited by the 4th-order time
// differencing of the oracle itself: on the default N_t=140 grid over
// T=40 the differencing error dominates the solver error by orders of
// magnitude. Solver correctness is therefore asserted under refinement
// (dense output sampling and doubled N_x), where the ratio collapses to
// the integrator's floor; the default-grid values are kept as frozen
// regression guards.
TEST_CASE("solver correctness under grid refinement") {
  struct Row { Equation eq; int nx; double bound; };
  for (auto [eq, nx, bound] : {Row{Equation::Kdv, 256, 2e-4},
                               Row{Equation::Ks, 256, 3e-5},
                               Row{Equation::Nkdv, 256, 3e-4},
                               Row{Equation::Burgers, 128, 5e-5}}) {
    PdeSpec spec = make_pde_spec(eq);
    auto b = generate_bundle(spec, 0, nx, 1120);
    auto st = oracle::spectral_residual(b);
    CAPTURE(spec.name, st.max_abs_residual, st.max_abs_ut, st.ratio());
    REQUIRE(st.ratio() < bound);
  }
}

TEST_CASE("KdV bundle: stored-grid residual guard and conservation") {
  PdeSpec spec = make_pde_spec(Equation::Kdv);
  auto b = generate_bundle(spec, /*seed=*/0, 256, 140);
  auto st = oracle::spectral_residual(b);
  CAPTURE(st.max_abs_residual, st.max_abs_ut, st.ratio());
  REQUIRE(st.ratio() < 0.1);

  // KdV is in conservation form: the spatial mean is conserved.
  double m0 = 0.0, worst = 0.0;
  for (int j = 0; j < b.n_x; ++j) m0 += b.u.at(0, j);
  m0 /= static_cast<double>(b.n_x);
  double scale = std::fabs(m0) + 1.0;
  for (int64_t i = 1; i < b.n_t; ++i) {
    double m = 0.0;
    for (int j = 0; j < b.n_x; ++j) m += b.u.at(i, j);
    m /= static_cast<double>(b.n_x);
    worst = std::max(worst, std::fabs(m - m0) / scale);
  }
  REQUIRE(worst < 1e-8);
}

TEST_CASE("KS bundle: stored-grid residual guard") {
  PdeSpec spec = make_pde_spec(Equation::Ks);
  auto b = generate_bundle(spec, 1, 256, 140);
  auto st = oracle::spectral_residual(b);
  CAPTURE(st.max_abs_residual, st.max_abs_ut);
  REQUIRE(st.ratio() < 5e-3);
}

TEST_CASE("Burgers via Cole-Hopf: stored-grid residual guard") {
  PdeSpec spec = make_pde_spec(Equation::Burgers);
  auto b = generate_bundle(spec, 2, 128, 70);
  auto st = oracle::spectral_residual(b);
  CAPTURE(st.max_abs_residual, st.max_abs_ut);
  REQUIRE(st.ratio() < 6e-2);
}

TEST_CASE("cole_hopf formula on analytic rows") {
  // constant phi -> u == 0
  SolutionBundle phi;
  phi.equation = "heat";
  phi.L = 16.0;
  phi.T = 0.0;
  phi.n_x = 64;
  phi.n_t = 1;
  phi.u = NdArray({1, 64}, 2.5);
  auto u = cole_hopf(phi, 0.3);
  for (int j = 0; j < 64; ++j) REQUIRE(std::fabs(u.u.at(0, j)) < 1e-14);

  // phi = exp(c sin(2 pi x / L)) -> u = -2 nu c (2 pi / L) cos(2 pi x / L)
  double c = 0.4, nu = 0.3, L = 16.0;
  for (int j = 0; j < 64; ++j)
    phi.u.at(0, j) = std::exp(c * std::sin(2.0 * M_PI * phi.x(j) / L));
  auto u2 = cole_hopf(phi, nu);
  for (int j = 0; j < 64; ++j) {
    double expect = -2.0 * nu * c * (2.0 * M_PI / L) * std::cos(2.0 * M_PI * phi.x(j) / L);
    REQUIRE(u2.u.at(0, j) == Catch::Approx(expect).margin(1e-9));
  }

  phi.u.at(0, 5) = -1.0;
  REQUIRE_THROWS_AS(cole_hopf(phi, nu), NumericError);
}

TEST_CASE("nKdV bundle satisfies the warped-time residual") {
  PdeSpec nspec = make_pde_spec(Equation::Nkdv);
  auto nb = generate_bundle(nspec, 0, 256, 140);
  auto nst = oracle::spectral_residual(nb);
  CAPTURE(nst.max_abs_residual, nst.max_abs_ut);
  REQUIRE(nst.ratio() < 0.1);

  // Round-trip of the time map itself.
  REQUIRE(nkdv_time_forward(0.0, 1.0) == 0.0);
  REQUIRE(nkdv_time_forward(1.0, 1.0) == Catch::Approx(M_E - 1.0).epsilon(1e-14));
  double t_hat = 0.37;
  REQUIRE(nkdv_time_inverse(nkdv_time_forward(t_hat, 1.0), 1.0) ==
          Catch::Approx(t_hat).margin(1e-12));
  REQUIRE_THROWS_AS(nkdv_time_inverse(-1.5, 1.0), ValidationError);
}

TEST_CASE("evolve determinism: same seed gives bit-identical grids") {
  PdeSpec spec = make_pde_spec(Equation::Kdv);
  auto a = generate_bundle(spec, 5, 128, 35);
  auto b = generate_bundle(spec, 5, 128, 35);
  REQUIRE(a.u.numel() == b.u.numel());
  for (int64_t i = 0; i < a.u.numel(); ++i) REQUIRE(a.u[i] == b.u[i]);
}

TEST_CASE("bundle IO: roundtrip, missing field, bad payload") {
  PdeSpec spec = make_pde_spec(Equation::Kdv);
  auto b = generate_bundle(spec, 9, 64, 12);
  fs::path dir = fs::temp_directory_path() / "symmflow_test_bundle";
  write_bundle(b, dir);
  auto r = read_bundle(dir);
  REQUIRE(r.equation == b.equation);
  REQUIRE(r.L == b.L);
  REQUIRE(r.T == b.T);
  REQUIRE(r.seed == b.seed);
  for (int64_t i = 0; i < b.u.numel(); ++i) REQUIRE(r.u[i] == b.u[i]);

  // missing field names the field
  {
    std::ifstream f(dir / "meta.json");
    nlohmann::json meta;
    f >> meta;
    meta.erase("N_x");
    std::ofstream o(dir / "meta.json");
    o << meta.dump();
  }
  REQUIRE_THROWS_WITH(read_bundle(dir), Catch::Matchers::ContainsSubstring("N_x"));

  // payload length mismatch
  write_bundle(b, dir);
  {
    std::ofstream o(dir / "u.f64", std::ios::binary | std::ios::app);
    double junk = 1.0;
    o.write(reinterpret_cast<const char*>(&junk), sizeof(junk));
  }
  REQUIRE_THROWS_AS(read_bundle(dir), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("blow-up produces an error naming the time reached") {
  PdeSpec spec = make_pde_spec(Equation::Kdv);
  spec.dt_target = 2.0;  // grossly unstable stepping
  std::vector<double> ic = random_fourier_ic(0, 10, spec.L, -3.0, 3.0, 1, 8, 64);
  try {
    evolve(spec, ic, 30, 40.0);
    // Some draws survive even abusive steps; only inspect the message
    // when it does throw.
  } catch (const NumericError& e) {
    REQUIRE(std::string(e.what()).find("t=") != std::string::npos);
  }
}
