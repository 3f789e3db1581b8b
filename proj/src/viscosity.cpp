#include "pxfb/viscosity.hpp"

#include <algorithm>

#include "json.hpp"

namespace pxfb {

double TestPolynomial::operator()(const Vec& x) const {
  Vec d = x - center;
  return value + dot(gradient, d) + 0.5 * dot(d, hessian * d);
}

Vec TestPolynomial::grad(const Vec& x) const {
  Vec d = x - center;
  return gradient + hessian * d;
}

SmoothField TestPolynomial::as_field() const {
  TestPolynomial self = *this;
  SmoothField f;
  f.value = [self](const Vec& x) { return self(x); };
  f.gradient = [self](const Vec& x) { return self.grad(x); };
  f.hessian = [self](const Vec&) { return self.hessian; };
  return f;
}

TestPolynomial TestPolynomial::taylor_of(const GridFunction& u, const Index& idx) {
  require(u.has_margin(idx, 1), ErrorKind::validation,
          "Taylor data needs an interior node");
  TestPolynomial phi;
  phi.center = u.position(idx);
  phi.value = u.at(idx);
  phi.gradient = central_gradient(u, idx);
  phi.hessian = central_hessian(u, idx);
  return phi;
}

std::string TouchingVerdict::to_json_string() const {
  nlohmann::ordered_json j;
  j["status"] = status == VerdictStatus::pass        ? "pass"
                : status == VerdictStatus::violation ? "violation"
                                                     : "exempt";
  j["side"] = side == TouchSide::from_above ? "from_above" : "from_below";
  std::vector<double> x(touch_point.a.begin(),
                        touch_point.a.begin() + touch_point.n);
  j["touch_point"] = x;
  j["shift"] = shift;
  j["inequality_value"] = inequality_value;
  j["tolerance"] = tolerance;
  j["detail"] = detail;
  return j.dump(2);
}

TouchResult find_touch(const GridFunction& u, const TestPolynomial& phi,
                       TouchSide side, double radius) {
  require(radius > 0, ErrorKind::validation, "touch window radius must be positive");
  bool found = false;
  double best = 0;
  Index best_idx{};
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec& x) {
    if (norm(x - phi.center) > radius) return;
    double diff = u.at(flat) - phi(x);
    // below: shift = min(u - φ); above: shift = max(u - φ); lexicographic
    // scan order makes the first extremum the reported node.
    bool better = !found || (side == TouchSide::from_below ? diff < best
                                                           : diff > best);
    if (better) {
      best = diff;
      best_idx = idx;
      found = true;
    }
  });
  require(found, ErrorKind::no_touch, "touch window contains no lattice node");

  // localization: the contact must not sit on the window rim or the lattice rim
  Vec xc = u.position(best_idx);
  bool rim = !u.has_margin(best_idx, 1);
  for (int d = 0; d < u.dim() && !rim; ++d) {
    for (int s = -1; s <= 1 && !rim; s += 2) {
      Vec xn = xc;
      xn[d] += s * u.spacing(d);
      if (norm(xn - phi.center) > radius) rim = true;
    }
  }
  if (rim) {
    Error err(ErrorKind::no_touch,
              "contact is not localized: nearest extremum lies on the window rim");
    err.payload = norm(xc - phi.center);
    throw err;
  }

  TouchResult r;
  r.node = best_idx;
  r.shift = best;
  r.gap = std::fabs(u.at(best_idx) - (phi(xc) + best));
  return r;
}

namespace {

TouchingVerdict make_verdict(VerdictStatus status, const Vec& x, TouchSide side,
                             double margin, double tol, std::string detail) {
  TouchingVerdict v;
  v.status = status;
  v.touch_point = x;
  v.side = side;
  v.inequality_value = margin;
  v.tolerance = tol;
  v.detail = std::move(detail);
  return v;
}

}  // namespace

TouchingVerdict interior_viscosity_check(const GridFunction& u,
                                         const ExponentField& P,
                                         const GridFunction& f,
                                         const TestPolynomial& phi,
                                         const Index& x0, TouchSide side,
                                         double tol, double grad_floor) {
  GridFunction::require_compatible(u, f, "interior_viscosity_check");
  require(u.has_margin(x0, 1), ErrorKind::validation,
          "touch node must be interior");
  Vec x = u.position(x0);
  // strictly inside the positive phase: the whole Moore neighborhood is positive
  Index lo = x0, probe{};
  bool positive = u.at(x0) > 0;
  if (positive) {
    const int n = u.dim();
    int combos = 1;
    for (int d = 0; d < n; ++d) combos *= 3;
    for (int c = 0; c < combos && positive; ++c) {
      int rem = c;
      probe = x0;
      for (int d = 0; d < n; ++d) {
        probe[static_cast<size_t>(d)] += (rem % 3) - 1;
        rem /= 3;
      }
      positive = u.at(probe) > 0;
    }
  }
  (void)lo;
  if (!positive)
    fail(ErrorKind::hypothesis_violated,
         "interior check outside the strict positive phase");

  Vec g = phi.grad(x);
  double gn = norm(g);
  if (gn < grad_floor)
    return make_verdict(VerdictStatus::exempt, x, side, 0, tol,
                        "test gradient below floor " + format_double(grad_floor));

  double L = p_laplacian_from_derivatives(g, phi.hessian, P(x), P.grad(x));
  double margin = side == TouchSide::from_above ? L - f.at(x0) : f.at(x0) - L;
  VerdictStatus st = margin >= -tol ? VerdictStatus::pass : VerdictStatus::violation;
  return make_verdict(st, x, side, margin, tol,
                      "operator value " + format_double(L) + ", rhs " +
                          format_double(f.at(x0)));
}

TouchingVerdict fb_condition_check(const GridFunction& u, const PositivePhase& phase,
                                   const std::function<double(const Vec&)>& g,
                                   const TestPolynomial& phi, const Vec& x0,
                                   TouchSide side, double tol) {
  double dist = distance_to_free_boundary(phase, x0);
  if (dist > u.max_spacing() + 1e-12)
    fail(ErrorKind::not_on_free_boundary,
         "point is " + format_double(dist) + " from the extracted interface");

  Vec grad = phi.grad(x0);
  double gn = norm(grad);
  if (gn < kGradientFloor)
    return make_verdict(VerdictStatus::exempt, x0, side, 0, tol,
                        "degenerate test gradient");
  double speed = g(x0);
  double margin = side == TouchSide::from_below ? speed - gn : gn - speed;
  VerdictStatus st = margin >= -tol ? VerdictStatus::pass : VerdictStatus::violation;
  return make_verdict(st, x0, side, margin, tol,
                      "|grad phi| = " + format_double(gn) + ", speed = " +
                          format_double(speed));
}

ComparisonCheck comparison_principle_check(const GridFunction& u,
                                           const SmoothField& v,
                                           const ComparisonReport& classification) {
  require(classification.verdict == ComparisonClass::strict_sub,
          ErrorKind::hypothesis_violated,
          "comparison requires a strict subsolution classification");

  // hypothesis: u dominates the positive part everywhere
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    double vp = std::max(v.value(x), 0.0);
    require(u.at(flat) >= vp - 1e-12, ErrorKind::hypothesis_violated,
            "u < v+ at a node: ordering hypothesis fails");
  });

  ComparisonCheck out;
  out.min_gap = std::numeric_limits<double>::infinity();
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec& x) {
    double vx = v.value(x);
    bool band = false;
    if (!(vx > 0)) {
      for (int d = 0; d < u.dim() && !band; ++d) {
        for (int s = -1; s <= 1 && !band; s += 2) {
          Index nb = idx;
          nb[static_cast<size_t>(d)] += s;
          if (nb[static_cast<size_t>(d)] < 0 ||
              nb[static_cast<size_t>(d)] >= u.shape(d))
            continue;
          if (v.value(u.position(nb)) > 0) band = true;
        }
      }
      if (!band) return;
    }
    double gap = u.at(flat) - vx;
    ++out.checked_nodes;
    if (gap < out.min_gap) {
      out.min_gap = gap;
      out.worst_point = x;
    }
  });
  require(out.checked_nodes > 0, ErrorKind::validation,
          "comparison region contains no positivity nodes");
  out.ordered = out.min_gap > 0;
  return out;
}

TouchingVerdict neumann_viscosity_check(const GridFunction& u, double p0,
                                        const TestPolynomial& phi,
                                        const Index& x0, TouchSide side,
                                        double tol, bool strict_interior_only) {
  require(p0 > 1.0, ErrorKind::validation, "linearized operator needs p0 > 1");
  const int n = u.dim();
  for (int d = 0; d < n - 1; ++d) {
    int i = x0[static_cast<size_t>(d)];
    require(i > 0 && i < u.shape(d) - 1, ErrorKind::hypothesis_violated,
            "touch node lies on a Dirichlet side");
  }
  require(x0[static_cast<size_t>(n - 1)] < u.shape(n - 1) - 1,
          ErrorKind::hypothesis_violated, "touch node lies on the Dirichlet top");

  Vec x = u.position(x0);
  double L = trace(phi.hessian) + (p0 - 2.0) * phi.hessian(n - 1, n - 1);
  bool on_wall = x0[static_cast<size_t>(n - 1)] == 0;

  if (!on_wall) {
    double margin = side == TouchSide::from_below ? -L : L;
    VerdictStatus st = margin >= -tol ? VerdictStatus::pass : VerdictStatus::violation;
    return make_verdict(st, x, side, margin, tol,
                        "interior operator value " + format_double(L));
  }

  if (strict_interior_only) {
    bool strict = side == TouchSide::from_below ? L > 0 : L < 0;
    if (!strict)
      return make_verdict(VerdictStatus::exempt, x, side, 0, tol,
                          "wall touch without interior strictness, operator " +
                              format_double(L));
  }
  double dn = phi.grad(x)[n - 1];
  double margin = side == TouchSide::from_below ? -dn : dn;
  VerdictStatus st = margin >= -tol ? VerdictStatus::pass : VerdictStatus::violation;
  return make_verdict(st, x, side, margin, tol,
                      "wall normal derivative " + format_double(dn));
}

}  // namespace pxfb
