#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "json.hpp"
#include "pxfb/viscosity.hpp"

using namespace pxfb;

namespace {

GridFunction sample2(const Box& box, int nodes,
                     const std::function<double(const Vec&)>& f) {
  GridFunction u(box, Index{nodes, nodes});
  u.sample(f);
  return u;
}

// paraboloid |x|^2 and its shifted variants used as touch targets
double bowl(const Vec& x) { return dot(x, x); }

TestPolynomial plane_through(const Vec& center, const Vec& gradient,
                             double value = 0.0) {
  TestPolynomial phi;
  phi.center = center;
  phi.value = value;
  phi.gradient = gradient;
  phi.hessian = Mat(center.dim());
  return phi;
}

}  // namespace

TEST_CASE("test polynomial: evaluation, gradient, field view") {
  TestPolynomial phi;
  phi.center = Vec{1.0, -1.0};
  phi.value = 2.0;
  phi.gradient = Vec{3.0, 0.5};
  phi.hessian = Mat::identity(2);
  phi.hessian(0, 1) = phi.hessian(1, 0) = -1.0;

  Vec x{1.5, -0.5};
  Vec d = x - phi.center;  // (0.5, 0.5)
  // by hand: 2 + (3*0.5 + 0.5*0.5) + 0.5 * d'Hd, d'Hd = 0.25 + 0.25 - 2*0.25
  double quad = 0.5 * (d[0] * d[0] + d[1] * d[1] - 2.0 * d[0] * d[1]);
  double want = 2.0 + 1.75 + quad;
  CHECK(phi(x) == doctest::Approx(want).epsilon(1e-14));

  Vec g = phi.grad(x);
  CHECK(g[0] == doctest::Approx(3.0 + d[0] - d[1]).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(0.5 - d[0] + d[1]).epsilon(1e-14));

  SmoothField f = phi.as_field();
  CHECK(f.value(x) == doctest::Approx(phi(x)).epsilon(1e-15));
  CHECK(norm(f.gradient(x) - g) <= 1e-15);
}

TEST_CASE("taylor_of reproduces a quadratic exactly") {
  Box box(Vec{-1.0, -1.0}, Vec{1.0, 1.0});
  auto q = [](const Vec& x) {
    return 0.3 + x[0] - 0.5 * x[1] + x[0] * x[0] + 0.25 * x[0] * x[1];
  };
  GridFunction u = sample2(box, 33, q);
  Index idx{16, 20};
  TestPolynomial phi = TestPolynomial::taylor_of(u, idx);
  CHECK(phi.value == doctest::Approx(u.at(idx)).epsilon(1e-14));
  // evaluating the Taylor polynomial anywhere reproduces the quadratic
  for (const Vec& x : {Vec{0.1, 0.2}, Vec{-0.4, 0.6}}) {
    CHECK(phi(x) == doctest::Approx(q(x)).epsilon(1e-9));
  }
}

TEST_CASE("find_touch: plane below a bowl localizes at the tangency point") {
  Box box(Vec{-1.0, -1.0}, Vec{1.0, 1.0});
  GridFunction u = sample2(box, 33, bowl);
  Vec g{0.4, 0.2};
  Vec tangency = 0.5 * g;  // grad of |x|^2 equals g at x = g/2
  TestPolynomial phi = plane_through(tangency, g);
  TouchResult tr = find_touch(u, phi, TouchSide::from_below, 0.5);
  CHECK(tr.gap <= 1e-12);
  Vec pos = u.position(tr.node);
  double h = u.spacing(0);
  CHECK(norm(pos - tangency) <= 2.0 * h);
  // the shifted plane really is below u everywhere on the window
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    if (norm(x - phi.center) > 0.5) return;
    CHECK(u.at(flat) - (phi(x) + tr.shift) >= -1e-12);
  });
}

TEST_CASE("find_touch: steeper bowl touches from above at the origin") {
  Box box(Vec{-1.0, -1.0}, Vec{1.0, 1.0});
  GridFunction u = sample2(box, 33, bowl);
  TestPolynomial phi;
  phi.center = Vec{0.0, 0.0};
  phi.value = 0.0;
  phi.gradient = Vec{0.0, 0.0};
  phi.hessian = 4.0 * Mat::identity(2);  // 2|x|^2, u - phi = -|x|^2
  TouchResult tr = find_touch(u, phi, TouchSide::from_above, 0.4);
  CHECK(tr.gap <= 1e-12);
  CHECK(norm(u.position(tr.node)) <= 1e-12);
}

TEST_CASE("find_touch: contact on the window rim is rejected as unlocalized") {
  Box box(Vec{-1.0, -1.0}, Vec{1.0, 1.0});
  GridFunction u = sample2(box, 33, bowl);
  TestPolynomial phi;
  phi.center = Vec{0.0, 0.0};
  phi.value = 0.0;
  phi.gradient = Vec{0.0, 0.0};
  phi.hessian = -2.0 * Mat::identity(2);  // concave: u - phi strictly convex
  try {
    find_touch(u, phi, TouchSide::from_above, 0.4);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_touch);
  }
}

// ---------------------------------------------------------------------------
// Interior inequality
// ---------------------------------------------------------------------------

namespace {

struct InteriorFixture {
  Box box{Vec{-1.0, -1.0}, Vec{1.0, 1.0}};
  GridFunction u;
  GridFunction f;
  ExponentField P = ExponentField::constant(2, 2.0);
  Index x0{20, 20};

  InteriorFixture()
      : u(sample2(box, 33, [](const Vec& x) { return 0.5 * dot(x, x) + 0.1; })),
        f(box, Index{33, 33}) {
    f.fill(2.0);  // lap of |x|^2/2 is 2 in two dimensions
  }
};

}  // namespace

TEST_CASE("interior check: touching quadratics on both sides of a solution "
          "pass") {
  InteriorFixture fx;
  // from above: extra upward curvature, lap phi = 2 + 2 >= f = 2
  TestPolynomial above = TestPolynomial::taylor_of(fx.u, fx.x0);
  above.hessian(0, 0) += 1.0;
  above.hessian(1, 1) += 1.0;
  TouchingVerdict va = interior_viscosity_check(fx.u, fx.P, fx.f, above, fx.x0,
                                                TouchSide::from_above, 1e-9);
  CHECK(va.status == VerdictStatus::pass);
  CHECK(va.inequality_value >= 0);

  // from below: less curvature, lap phi = 0 <= f = 2
  TestPolynomial below = TestPolynomial::taylor_of(fx.u, fx.x0);
  below.hessian(0, 0) -= 1.0;
  below.hessian(1, 1) -= 1.0;
  TouchingVerdict vb = interior_viscosity_check(fx.u, fx.P, fx.f, below, fx.x0,
                                                TouchSide::from_below, 1e-9);
  CHECK(vb.status == VerdictStatus::pass);
  CHECK(vb.inequality_value >= 0);

  // verdicts serialize to JSON
  auto j = nlohmann::json::parse(va.to_json_string());
  CHECK(j.contains("status"));
  CHECK(j["status"].get<std::string>() == "pass");
}

TEST_CASE("interior check: inconsistent forcing is flagged as a violation") {
  InteriorFixture fx;
  GridFunction wrong_f = fx.f;
  wrong_f.fill(10.0);
  TestPolynomial above = TestPolynomial::taylor_of(fx.u, fx.x0);
  above.hessian(0, 0) += 1.0;
  above.hessian(1, 1) += 1.0;
  TouchingVerdict v = interior_viscosity_check(fx.u, fx.P, wrong_f, above,
                                               fx.x0, TouchSide::from_above,
                                               1e-9);
  CHECK(v.status == VerdictStatus::violation);
  CHECK(v.inequality_value < 0);
}

TEST_CASE("interior check: degenerate gradient at the touch point is exempt") {
  InteriorFixture fx;
  Index origin{16, 16};  // grid center, where grad(|x|^2/2) = 0
  TestPolynomial phi = TestPolynomial::taylor_of(fx.u, origin);
  TouchingVerdict v = interior_viscosity_check(fx.u, fx.P, fx.f, phi, origin,
                                               TouchSide::from_above, 1e-9);
  CHECK(v.status == VerdictStatus::exempt);
}

TEST_CASE("interior check: invariant under common constant shifts; margins "
          "antisymmetric under sign flip at the operator level") {
  InteriorFixture fx;
  TestPolynomial above = TestPolynomial::taylor_of(fx.u, fx.x0);
  above.hessian(0, 0) += 1.0;
  above.hessian(1, 1) += 1.0;
  TouchingVerdict v = interior_viscosity_check(fx.u, fx.P, fx.f, above, fx.x0,
                                               TouchSide::from_above, 1e-9);

  // constant shift of u and phi together (stays inside the positive phase)
  GridFunction su = fx.u;
  for (std::int64_t i = 0; i < su.size(); ++i) su.at(i) += 0.37;
  TestPolynomial sphi = above;
  sphi.value += 0.37;
  TouchingVerdict vshift = interior_viscosity_check(su, fx.P, fx.f, sphi, fx.x0,
                                                    TouchSide::from_above, 1e-9);
  CHECK(vshift.status == v.status);
  CHECK(vshift.inequality_value ==
        doctest::Approx(v.inequality_value).epsilon(1e-10));

  // The sign-flip symmetry lives in the operator: with the one-phase
  // positivity precondition, -u is never admissible for the interior check
  // itself, but the margin comparison from_above(L[phi] - f) equals
  // from_below(-f - L[-phi]) because L is odd in (grad, hess).
  ExponentField A = ExponentField::affine(1.6, 2.8, 2.2, Vec{0.3, -0.2},
                                          Vec{0.5, 0.5});
  Vec x{0.4, 0.6};
  Vec g{0.8, -0.5};
  Mat H = Mat::identity(2);
  H(0, 1) = H(1, 0) = 0.3;
  double L = p_laplacian_from_derivatives(g, H, A(x), A.grad(x));
  double Lneg = p_laplacian_from_derivatives(-1.0 * g, -1.0 * H, A(x),
                                             A.grad(x));
  CHECK(Lneg == doctest::Approx(-L).epsilon(1e-13));
}

// ---------------------------------------------------------------------------
// Free-boundary inequality
// ---------------------------------------------------------------------------

TEST_CASE("free-boundary check: slope against the speed function, both sides") {
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  GridFunction u = sample2(box, 33, [](const Vec& x) {
    return std::max(x[1] - 0.3, 0.0);
  });
  PositivePhase phase = extract_positive_phase(u);
  REQUIRE(phase.boundary.size() > 0);
  Vec x0 = phase.boundary[phase.boundary.size() / 2].x;
  auto g_one = [](const Vec&) { return 1.0; };

  auto check_slope = [&](double s, TouchSide side) {
    TestPolynomial phi = plane_through(x0, Vec{0.0, s});
    return fb_condition_check(u, phase, g_one, phi, x0, side, 1e-9);
  };

  CHECK(check_slope(0.9, TouchSide::from_below).status == VerdictStatus::pass);
  CHECK(check_slope(1.2, TouchSide::from_below).status ==
        VerdictStatus::violation);
  CHECK(check_slope(1.2, TouchSide::from_above).status == VerdictStatus::pass);
  CHECK(check_slope(0.9, TouchSide::from_above).status ==
        VerdictStatus::violation);
}

TEST_CASE("free-boundary check: invariant under common positive rescaling") {
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  double c = 2.5;
  GridFunction u = sample2(box, 33, [](const Vec& x) {
    return std::max(x[1] - 0.3, 0.0);
  });
  GridFunction cu = sample2(box, 33, [&](const Vec& x) {
    return c * std::max(x[1] - 0.3, 0.0);
  });
  PositivePhase ph = extract_positive_phase(u);
  PositivePhase cph = extract_positive_phase(cu);
  Vec x0 = ph.boundary[0].x;

  TestPolynomial phi = plane_through(x0, Vec{0.0, 1.2});
  TestPolynomial cphi = plane_through(x0, Vec{0.0, c * 1.2});
  auto g1 = [](const Vec&) { return 1.0; };
  auto gc = [&](const Vec&) { return c * 1.0; };

  TouchingVerdict v = fb_condition_check(u, ph, g1, phi, x0,
                                         TouchSide::from_below, 1e-9);
  TouchingVerdict vc = fb_condition_check(cu, cph, gc, cphi, x0,
                                          TouchSide::from_below, 1e-9);
  CHECK(v.status == vc.status);
  CHECK(vc.inequality_value == doctest::Approx(c * v.inequality_value)
                                   .epsilon(1e-10));
}

TEST_CASE("free-boundary check: points away from the interface are rejected") {
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  GridFunction u = sample2(box, 33, [](const Vec& x) {
    return std::max(x[1] - 0.3, 0.0);
  });
  PositivePhase phase = extract_positive_phase(u);
  TestPolynomial phi = plane_through(Vec{0.5, 0.8}, Vec{0.0, 1.0});
  try {
    fb_condition_check(u, phase, [](const Vec&) { return 1.0; }, phi,
                       Vec{0.5, 0.8}, TouchSide::from_below, 1e-9);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::not_on_free_boundary);
  }
}

// ---------------------------------------------------------------------------
// Comparison principle
// ---------------------------------------------------------------------------

namespace {

SmoothField tilted_plane() {
  SmoothField v;
  v.value = [](const Vec& x) { return x[1] - 0.3; };
  v.gradient = [](const Vec&) { return Vec{0.0, 1.0}; };
  v.hessian = [](const Vec&) { return Mat(2); };
  return v;
}

}  // namespace

TEST_CASE("comparison principle: strictly separated solution is ordered") {
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  SmoothField v = tilted_plane();
  ExponentField P = ExponentField::constant(2, 2.0);
  ComparisonReport cls = classify_comparison(
      v, P, [](const Vec&) { return -1.0; }, [](const Vec&) { return 0.5; },
      box, 41);
  REQUIRE(cls.verdict == ComparisonClass::strict_sub);

  GridFunction u = sample2(box, 33, [](const Vec& x) {
    return std::max(x[1] - 0.3, 0.0) + 0.02;
  });
  ComparisonCheck chk = comparison_principle_check(u, v, cls);
  CHECK(chk.ordered);
  CHECK(chk.min_gap == doctest::Approx(0.02).epsilon(1e-9));
  CHECK(chk.checked_nodes > 0);

  // grazing contact: gap exactly zero somewhere -> not strictly ordered
  GridFunction u0 = sample2(box, 33, [](const Vec& x) {
    return std::max(x[1] - 0.3, 0.0);
  });
  ComparisonCheck chk0 = comparison_principle_check(u0, v, cls);
  CHECK(!chk0.ordered);
  CHECK(chk0.min_gap <= 0.0 + 1e-15);
}

TEST_CASE("comparison principle: hypothesis failures throw the typed error") {
  Box box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  SmoothField v = tilted_plane();
  ExponentField P = ExponentField::constant(2, 2.0);
  ComparisonReport cls = classify_comparison(
      v, P, [](const Vec&) { return -1.0; }, [](const Vec&) { return 0.5; },
      box, 41);

  // u dips below the positive part of v
  GridFunction bad = sample2(box, 33, [](const Vec& x) {
    return std::max(x[1] - 0.3, 0.0) - 0.01;
  });
  try {
    comparison_principle_check(bad, v, cls);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::hypothesis_violated);
  }

  // a non-subsolution classification is not accepted
  ComparisonReport super = classify_comparison(
      v, P, [](const Vec&) { return 1.0; }, [](const Vec&) { return 2.0; },
      box, 41);
  REQUIRE(super.verdict == ComparisonClass::strict_super);
  GridFunction u = sample2(box, 33, [](const Vec& x) {
    return std::max(x[1] - 0.3, 0.0) + 0.02;
  });
  try {
    comparison_principle_check(u, v, super);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::hypothesis_violated);
  }
}

// ---------------------------------------------------------------------------
// Linearized Neumann inequalities
// ---------------------------------------------------------------------------

namespace {

struct NeumannFixture {
  double p0 = 3.0;
  Box box{Vec{-0.5, 0.0}, Vec{0.5, 0.5}};
  GridFunction u;

  NeumannFixture() : u(box, Index{33, 17}) {
    double p = p0;
    u.sample([p](const Vec& x) {
      return x[0] * x[0] - x[1] * x[1] / (p - 1.0);
    });
  }
};

}  // namespace

TEST_CASE("neumann check: the compatible quadratic passes on both sides in "
          "the interior") {
  NeumannFixture fx;
  Index x0{16, 8};
  TestPolynomial phi = TestPolynomial::taylor_of(fx.u, x0);
  CHECK(neumann_viscosity_check(fx.u, fx.p0, phi, x0, TouchSide::from_below,
                                1e-9)
            .status == VerdictStatus::pass);
  CHECK(neumann_viscosity_check(fx.u, fx.p0, phi, x0, TouchSide::from_above,
                                1e-9)
            .status == VerdictStatus::pass);

  // extra curvature makes the operator positive: a from_below violation
  TestPolynomial bump = phi;
  bump.hessian(0, 0) += 1.0;
  CHECK(neumann_viscosity_check(fx.u, fx.p0, bump, x0, TouchSide::from_below,
                                1e-9)
            .status == VerdictStatus::violation);
  CHECK(neumann_viscosity_check(fx.u, fx.p0, bump, x0, TouchSide::from_above,
                                1e-9)
            .status == VerdictStatus::pass);
}

TEST_CASE("neumann check: boundary touches test the normal derivative") {
  NeumannFixture fx;
  Index b0{16, 0};
  Vec pos = fx.u.position(b0);
  REQUIRE(pos[1] == doctest::Approx(0.0));

  TestPolynomial down = plane_through(pos, Vec{0.1, -0.5});
  TestPolynomial up = plane_through(pos, Vec{0.1, 0.5});
  CHECK(neumann_viscosity_check(fx.u, fx.p0, down, b0, TouchSide::from_below,
                                1e-9)
            .status == VerdictStatus::pass);
  CHECK(neumann_viscosity_check(fx.u, fx.p0, up, b0, TouchSide::from_below,
                                1e-9)
            .status == VerdictStatus::violation);
  // mirrored convention from above
  CHECK(neumann_viscosity_check(fx.u, fx.p0, up, b0, TouchSide::from_above,
                                1e-9)
            .status == VerdictStatus::pass);
}

TEST_CASE("neumann check: strict-interior mode exempts boundary touches with "
          "the wrong operator sign") {
  NeumannFixture fx;
  Index b0{16, 0};
  Vec pos = fx.u.position(b0);

  // upward normal slope (a from_below boundary violation when enforced), with
  // strictly negative interior operator: exempt in strict-interior mode
  TestPolynomial phi = plane_through(pos, Vec{0.1, 0.5});
  phi.hessian(0, 0) = -1.0;  // L phi = -1 < 0
  CHECK(neumann_viscosity_check(fx.u, fx.p0, phi, b0, TouchSide::from_below,
                                1e-9, true)
            .status == VerdictStatus::exempt);
  // with positive interior operator the boundary inequality is enforced
  TestPolynomial phi2 = plane_through(pos, Vec{0.1, 0.5});
  phi2.hessian(0, 0) = 1.0;  // L phi = +1 > 0
  CHECK(neumann_viscosity_check(fx.u, fx.p0, phi2, b0, TouchSide::from_below,
                                1e-9, true)
            .status == VerdictStatus::violation);
  // without the flag the same touch is enforced regardless of the sign
  CHECK(neumann_viscosity_check(fx.u, fx.p0, phi, b0, TouchSide::from_below,
                                1e-9, false)
            .status == VerdictStatus::violation);
}

TEST_CASE("neumann check: verdicts are symmetric under sign flip with the "
          "side swapped") {
  // The half-box check carries no positivity precondition, so the full
  // (u, phi) -> (-u, -phi) symmetry is directly testable here.
  NeumannFixture fx;
  GridFunction nu = fx.u;
  for (std::int64_t i = 0; i < nu.size(); ++i) nu.at(i) = -nu.at(i);

  for (bool interior : {true, false}) {
    Index x0 = interior ? Index{16, 8} : Index{16, 0};
    TestPolynomial phi;
    if (interior) {
      phi = TestPolynomial::taylor_of(fx.u, x0);
      phi.hessian(0, 0) += 0.7;  // introduce a definite operator sign
    } else {
      phi = plane_through(fx.u.position(x0), Vec{0.1, 0.5});
    }
    TestPolynomial nphi = phi;
    nphi.value = -nphi.value;
    nphi.gradient = -1.0 * nphi.gradient;
    nphi.hessian = -1.0 * nphi.hessian;

    for (TouchSide side : {TouchSide::from_below, TouchSide::from_above}) {
      TouchSide swapped = side == TouchSide::from_below
                              ? TouchSide::from_above
                              : TouchSide::from_below;
      TouchingVerdict a =
          neumann_viscosity_check(fx.u, fx.p0, phi, x0, side, 1e-9);
      TouchingVerdict b =
          neumann_viscosity_check(nu, fx.p0, nphi, x0, swapped, 1e-9);
      CHECK(a.status == b.status);
      CHECK(a.inequality_value ==
            doctest::Approx(b.inequality_value).epsilon(1e-12));
    }
  }
}
