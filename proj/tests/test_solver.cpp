#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pxfb/solve.hpp"

using namespace pxfb;

// ---------------------------------------------------------------------------
// Independent oracles, written first.
// ---------------------------------------------------------------------------

namespace {

// 1D two-point problem (|u'| u')' = s on (0,1), u(0) = u(1) = 0, s = +-1:
// integrate once: |u'| u' = s (x - 1/2)  (the flux vanishes at the center by
// symmetry); invert: u' = sign(s(x-1/2)) |x - 1/2|^{1/2} sign(s)… combining,
// u(x) = s * (2/3) (|x - 1/2|^{3/2} - (1/2)^{3/2}).
double oracle_line_p3(double x, double s) {
  double t = std::fabs(x - 0.5);
  return s * (2.0 / 3.0) * (std::pow(t, 1.5) - std::pow(0.5, 1.5));
}

GridFunction sample1(int nodes, const std::function<double(double)>& f) {
  GridFunction u(Box(Vec{0.0}, Vec{1.0}), Index{nodes});
  u.sample([&](const Vec& x) { return f(x[0]); });
  return u;
}

GridFunction sample2(const Box& box, int nodes,
                     const std::function<double(const Vec&)>& f) {
  GridFunction u(box, Index{nodes, nodes});
  u.sample(f);
  return u;
}

}  // namespace

TEST_CASE("dirichlet solver: affine data reproduces the affine function for "
          "constant and variable exponents") {
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  // any slope works at constant exponent; a variable exponent needs unit
  // gradient so |grad u|^{p(x)-2} stays 1 and the flux is x-independent
  auto aff_half = [](const Vec& x) { return 0.2 + 0.5 * x[1]; };
  auto aff_unit = [](const Vec& x) { return 0.2 + x[1]; };
  GridFunction f(box, Index{17, 17});
  SolveConfig cfg;

  for (int variant = 0; variant < 2; ++variant) {
    std::function<double(const Vec&)> aff = aff_half;
    if (variant == 1) aff = aff_unit;
    ExponentField P = variant == 0
                          ? ExponentField::constant(2, 2.0)
                          : ExponentField::affine(1.6, 2.8, 2.2,
                                                  Vec{0.3, -0.2}, Vec{0.5, 0.5});
    GridFunction bd = sample2(box, 17, aff);
    SolveResult res = solve_dirichlet(P, f, bd, cfg);
    double worst = 0;
    for_each_node(res.u, [&](std::int64_t flat, const Index&, const Vec& x) {
      worst = std::max(worst, std::fabs(res.u.at(flat) - aff(x)));
    });
    CHECK(worst <= 1e-7);
    CHECK(res.final_residual <= cfg.tolerance);
  }
}

TEST_CASE("dirichlet solver: 1D p=3 closed form") {
  int nodes = 129;
  ExponentField P = ExponentField::constant(1, 3.0);
  GridFunction f = sample1(nodes, [](double) { return -1.0; });
  GridFunction bd = sample1(nodes, [](double) { return 0.0; });
  SolveConfig cfg;
  SolveResult res = solve_dirichlet(P, f, bd, cfg);
  double worst = 0;
  for_each_node(res.u, [&](std::int64_t flat, const Index&, const Vec& x) {
    worst = std::max(worst, std::fabs(res.u.at(flat) - oracle_line_p3(x[0], -1.0)));
  });
  CHECK(worst <= 1e-3);

  // the sign-flipped problem gives the sign-flipped profile
  GridFunction fp = sample1(nodes, [](double) { return 1.0; });
  SolveResult rp = solve_dirichlet(P, fp, bd, cfg);
  double worst_p = 0;
  for_each_node(rp.u, [&](std::int64_t flat, const Index&, const Vec& x) {
    worst_p = std::max(worst_p, std::fabs(rp.u.at(flat) - oracle_line_p3(x[0], 1.0)));
  });
  CHECK(worst_p <= 1e-3);
}

TEST_CASE("dirichlet solver: discrete-harmonic quadratic is reproduced exactly "
          "at p = 2") {
  // x0^2 - x1^2 has vanishing central second-difference Laplacian on any
  // uniform grid, so the discrete solution equals the quadratic to solver
  // tolerance.
  Box box(Vec{-0.5, -0.5}, Vec{0.5, 0.5});
  auto q = [](const Vec& x) { return x[0] * x[0] - x[1] * x[1]; };
  GridFunction bd = sample2(box, 33, q);
  GridFunction f(box, Index{33, 33});
  ExponentField P = ExponentField::constant(2, 2.0);
  SolveResult res = solve_dirichlet(P, f, bd, SolveConfig{});
  double worst = 0;
  for_each_node(res.u, [&](std::int64_t flat, const Index&, const Vec& x) {
    worst = std::max(worst, std::fabs(res.u.at(flat) - q(x)));
  });
  CHECK(worst <= 1e-7);
}

TEST_CASE("dirichlet solver: active mask fixes inactive nodes to the data") {
  Box box(Vec{0.0}, Vec{1.0});
  int nodes = 33;
  auto aff = [](const Vec& x) { return x[0]; };
  GridFunction bd(box, Index{nodes});
  bd.sample(aff);
  GridFunction f(box, Index{nodes});
  ExponentField P = ExponentField::constant(1, 2.5);
  std::vector<std::uint8_t> active(static_cast<size_t>(nodes), 0);
  for (int i = 0; i < nodes; ++i) {
    double x = bd.position(Index{i})[0];
    if (x > 0.25 && x < 0.75) active[static_cast<size_t>(i)] = 1;
  }
  SolveResult res = solve_dirichlet(P, f, bd, SolveConfig{}, &active);
  for_each_node(res.u, [&](std::int64_t flat, const Index&, const Vec& x) {
    CHECK(std::fabs(res.u.at(flat) - x[0]) <= 1e-8);
  });
}

TEST_CASE("dirichlet solver: iteration budget exhaustion raises the typed "
          "error with the residual payload") {
  int nodes = 129;
  ExponentField P = ExponentField::constant(1, 3.0);
  GridFunction f = sample1(nodes, [](double) { return -1.0; });
  GridFunction bd = sample1(nodes, [](double) { return 0.0; });
  SolveConfig cfg;
  cfg.max_iterations = 2;
  cfg.nested_levels = 0;
  try {
    solve_dirichlet(P, f, bd, cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::nonconvergence);
    CHECK(std::isfinite(e.payload));
    CHECK(e.payload > 0);
  }
}

TEST_CASE("dirichlet solver: explicit aggressive relaxation still converges "
          "under the divergence safeguard") {
  int nodes = 65;
  ExponentField P = ExponentField::constant(1, 4.0);
  GridFunction f = sample1(nodes, [](double) { return -1.0; });
  GridFunction bd = sample1(nodes, [](double) { return 0.0; });
  SolveConfig cfg;
  cfg.relaxation = 1.95;
  SolveResult res = solve_dirichlet(P, f, bd, cfg);
  CHECK(res.final_residual <= cfg.tolerance);
}

TEST_CASE("dirichlet solver: monotone in the boundary data") {
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  auto b1 = [](const Vec& x) { return 0.3 * std::sin(3.0 * x[0]) + 0.2 * x[1]; };
  GridFunction bd1 = sample2(box, 17, b1);
  GridFunction bd2 = sample2(box, 17, [&](const Vec& x) { return b1(x) + 0.05; });
  GridFunction f(box, Index{17, 17});
  f.fill(0.5);
  ExponentField P = ExponentField::constant(2, 2.5);
  SolveResult r1 = solve_dirichlet(P, f, bd1, SolveConfig{});
  SolveResult r2 = solve_dirichlet(P, f, bd2, SolveConfig{});
  for (std::int64_t i = 0; i < r1.u.size(); ++i)
    CHECK(r1.u.at(i) <= r2.u.at(i) + 1e-7);
}

TEST_CASE("shifted solver solves the same discrete system as the unshifted "
          "substitution") {
  // With w = v + x·e the face fluxes coincide term by term, so the shifted
  // solution plus the plane must match the plain Dirichlet solution for the
  // transported data.
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  int nodes = 17;
  Vec e{0.0, 1.0};
  auto w_data = [](const Vec& x) {
    return 0.1 * std::sin(2.0 * x[0]) + 1.1 * x[1] + 0.2;
  };
  GridFunction w_bd = sample2(box, nodes, w_data);
  GridFunction v_bd = sample2(box, nodes,
                              [&](const Vec& x) { return w_data(x) - x[1]; });
  GridFunction f(box, Index{nodes, nodes});
  f.fill(0.3);
  ExponentField P = ExponentField::affine(1.7, 2.9, 2.3, Vec{0.2, 0.1},
                                          Vec{0.5, 0.5});
  SolveResult rv = solve_shifted(P, f, e, v_bd, SolveConfig{});
  SolveResult rw = solve_dirichlet(P, f, w_bd, SolveConfig{});
  double worst = 0;
  for_each_node(rv.u, [&](std::int64_t flat, const Index&, const Vec& x) {
    worst = std::max(worst, std::fabs(rv.u.at(flat) + x[1] - rw.u.at(flat)));
  });
  CHECK(worst <= 1e-7);
}

// ---------------------------------------------------------------------------
// Energy minimization
// ---------------------------------------------------------------------------

TEST_CASE("energy minimization: linear boundary data with no phase weight "
          "gives the linear interpolant, including its negative part") {
  // Q = 0 and f = 0 reduce the functional to the Dirichlet energy; the
  // minimizer is the affine interpolant, which dips below zero on the left.
  // In particular the admissible class carries no nonnegativity constraint.
  int nodes = 65;
  Box box(Vec{0.0}, Vec{1.0});
  auto aff = [](const Vec& x) { return x[0] - 0.5; };
  GridFunction bd(box, Index{nodes});
  bd.sample(aff);
  GridFunction f(box, Index{nodes});
  GridFunction Q(box, Index{nodes});
  EnergyProblem prob(ExponentField::constant(1, 2.0), f, Q, bd);
  SolveConfig cfg;
  cfg.max_iterations = 400000;
  EnergyResult res = minimize_energy(prob, cfg);
  double worst = 0;
  for_each_node(res.u, [&](std::int64_t flat, const Index&, const Vec& x) {
    worst = std::max(worst, std::fabs(res.u.at(flat) - aff(x)));
  });
  CHECK(worst <= 1e-4);
  CHECK(res.u.min_value() < -0.4);
}

TEST_CASE("energy minimization: slab interface lands at a/Q with slope Q") {
  // u(0) = a, u(1) = 0, constant speed Q: the optimal profile is the ramp
  // a - Qx truncated at x* = a/Q, by the phase-weight normalization.
  int nodes = 129;
  double a = 0.5, Qv = 1.0;
  Box box(Vec{0.0}, Vec{1.0});
  GridFunction bd(box, Index{nodes});
  bd.sample([&](const Vec& x) { return a * (1.0 - x[0]); });
  GridFunction f(box, Index{nodes});
  GridFunction Q(box, Index{nodes});
  Q.fill(Qv);
  EnergyProblem prob(ExponentField::constant(1, 2.0), f, Q, bd);
  SolveConfig cfg;
  cfg.max_iterations = 400000;
  EnergyResult res = minimize_energy(prob, cfg);

  double h = res.u.spacing(0);
  PositivePhase ph = extract_positive_phase(res.u);
  REQUIRE(ph.boundary.size() >= 1);
  double xstar = ph.boundary[0].x[0];
  CHECK(std::fabs(xstar - a / Qv) <= 2.0 * h);

  // slope magnitude by central difference in the middle of the ramp
  int mid = static_cast<int>(std::lround(0.5 * (a / Qv) / h));
  double slope = std::fabs(
      (res.u.at(Index{mid + 1}) - res.u.at(Index{mid - 1})) / (2.0 * h));
  CHECK(slope == doctest::Approx(Qv).epsilon(0.05));
}

TEST_CASE("energy minimization: the discrete energy never increases and the "
          "final value matches a direct evaluation") {
  int nodes = 65;
  Box box(Vec{0.0}, Vec{1.0});
  GridFunction bd(box, Index{nodes});
  bd.sample([](const Vec& x) { return 0.4 * (1.0 - x[0]); });
  GridFunction f(box, Index{nodes});
  f.fill(-0.1);
  GridFunction Q(box, Index{nodes});
  Q.fill(1.0);
  EnergyProblem prob(ExponentField::constant(1, 2.0), f, Q, bd);
  SolveConfig cfg;
  cfg.max_iterations = 400000;
  EnergyResult res = minimize_energy(prob, cfg, &bd);

  REQUIRE(res.history.entries.size() >= 2);
  for (size_t i = 1; i < res.history.entries.size(); ++i) {
    CHECK(res.history.entries[i].energy <=
          res.history.entries[i - 1].energy + 1e-12);
    CHECK(res.history.entries[i].residual >= -1e-13);
  }
  double direct = discrete_energy(res.u, prob, SolveConfig{}.flux_delta);
  CHECK(res.final_energy == doctest::Approx(direct).epsilon(1e-10));
  CHECK(res.final_energy <= discrete_energy(bd, prob, SolveConfig{}.flux_delta) + 1e-12);
}

TEST_CASE("energy minimization: negative speed field is rejected") {
  int nodes = 17;
  Box box(Vec{0.0}, Vec{1.0});
  GridFunction bd(box, Index{nodes});
  GridFunction f(box, Index{nodes});
  GridFunction Q(box, Index{nodes});
  Q.fill(-1.0);
  CHECK_THROWS_AS(
      EnergyProblem(ExponentField::constant(1, 2.0), f, Q, bd), Error);
}

// ---------------------------------------------------------------------------
// Linearized Neumann problem
// ---------------------------------------------------------------------------

TEST_CASE("neumann solver: the compatible quadratic is a discrete solution") {
  // q(x) = x0^2 - x1^2/(p0-1) satisfies lap q + (p0-2) q_nn = 0 and has zero
  // normal derivative on the reflection plane; second differences are exact
  // on quadratics, so the discrete solution reproduces it to solver tolerance.
  double rho = 0.5, h = 1.0 / 32.0;
  for (double p0 : {1.5, 2.0, 3.0}) {
    auto data = [&](const Vec& x) {
      return x[0] * x[0] - x[1] * x[1] / (p0 - 1.0);
    };
    SolveConfig cfg;
    SolveResult res = solve_neumann_linearized(p0, rho, 2, data, h, cfg);
    double worst = 0;
    for_each_node(res.u, [&](std::int64_t flat, const Index&, const Vec& x) {
      worst = std::max(worst, std::fabs(res.u.at(flat) - data(x)));
    });
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("neumann solver: symmetric data gives a symmetric solution") {
  double rho = 0.5, h = 1.0 / 32.0, p0 = 3.0;
  auto data = [&](const Vec& x) {
    return std::cos(2.0 * x[0]) * (1.0 + 0.5 * x[1]);
  };
  SolveResult res = solve_neumann_linearized(p0, rho, 2, data, h, SolveConfig{});
  int nx = res.u.shape(0);
  int ny = res.u.shape(1);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      double a = res.u.at(Index{i, j});
      double b = res.u.at(Index{nx - 1 - i, j});
      CHECK(std::fabs(a - b) <= 1e-9);
    }
  }
}

TEST_CASE("neumann solver: quadratic remainder constant is stable in the "
          "radius for polynomial data") {
  double rho = 0.5, h = 1.0 / 64.0, p0 = 2.0;
  auto data = [&](const Vec& x) {
    return x[0] * x[0] - x[1] * x[1] / (p0 - 1.0);
  };
  SolveResult res = solve_neumann_linearized(p0, rho, 2, data, h, SolveConfig{});
  // with u exactly quadratic and vanishing gradient at the origin, the
  // constant equals sup |q| / r^2 over the lattice half ball, about
  // max(1, 1/(p0-1)) for every radius
  double c_small = quadratic_remainder_constant(res.u, 1.0 / 8.0);
  double c_large = quadratic_remainder_constant(res.u, 1.0 / 4.0);
  CHECK(c_small > 0);
  CHECK(c_large > 0);
  double ratio = std::max(c_small, c_large) / std::min(c_small, c_large);
  CHECK(ratio <= 2.0);
  CHECK(c_large == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("neumann solver: rejects degenerate base exponent") {
  auto data = [](const Vec& x) { return x[0]; };
  CHECK_THROWS_AS(
      solve_neumann_linearized(1.0, 0.5, 2, data, 1.0 / 16.0, SolveConfig{}),
      Error);
}

TEST_CASE("convergence history writes a parseable CSV") {
  int nodes = 33;
  ExponentField P = ExponentField::constant(1, 2.0);
  Box box(Vec{0.0}, Vec{1.0});
  GridFunction f(box, Index{nodes});
  f.fill(1.0);
  GridFunction bd(box, Index{nodes});
  SolveResult res = solve_dirichlet(P, f, bd, SolveConfig{});
  auto path = std::filesystem::temp_directory_path() / "pxfb_test_history.csv";
  res.history.save_csv(path.string());
  std::ifstream is(path);
  REQUIRE(is.good());
  std::string header;
  std::getline(is, header);
  CHECK(header.find("iteration") != std::string::npos);
  CHECK(header.find("residual") != std::string::npos);
  std::filesystem::remove(path);
}
