#pragma once

// Touching-test machinery: locate discrete touches of smooth test functions
// against grid solutions and check the pointwise inequalities that
// sub/supersolutions must satisfy at touch points, both in the interior and on
// the free boundary, plus the boundary version for the linearized Neumann
// problem. All verdicts are symmetric under (u, φ, f) → (-u, -φ, -f) with the
// side swapped, and invariant under adding one constant to both u and φ.

#include <optional>
#include <string>

#include "pxfb/barrier.hpp"
#include "pxfb/solve.hpp"

namespace pxfb {

enum class TouchSide { from_above, from_below };  // side φ touches u from

struct TestPolynomial {
  Vec center;
  double value = 0;
  Vec gradient;
  Mat hessian;

  double operator()(const Vec& x) const;
  Vec grad(const Vec& x) const;
  SmoothField as_field() const;
  // Discrete second-order Taylor data of u at an interior node.
  static TestPolynomial taylor_of(const GridFunction& u, const Index& idx);
};

enum class VerdictStatus { pass, violation, exempt };

struct TouchingVerdict {
  VerdictStatus status = VerdictStatus::exempt;
  Vec touch_point;
  TouchSide side = TouchSide::from_above;
  double shift = 0;             // vertical shift applied to φ to make it touch
  double inequality_value = 0;  // signed margin; >= -tol passes
  double tolerance = 0;
  std::string detail;
  std::string to_json_string() const;
};

struct TouchResult {
  Index node{};            // contact node (lexicographic first among ties)
  double shift = 0;        // φ + shift (below) / φ - shift' (above) touches u
  double gap = 0;          // |u - φ_shifted| at the node, <= 1e-12 by design
};

// Minimal vertical shift so φ touches u from `side` within the window of
// lattice nodes with |x - φ.center| <= radius. Throws no_touch if the contact
// lands on the window rim (touch not localized).
TouchResult find_touch(const GridFunction& u, const TestPolynomial& phi,
                       TouchSide side, double radius);

// Interior inequality at a validated touch at x0 (strictly inside {u > 0}):
//   from_above:  Δ_{p(x0)}φ(x0) >= f(x0) - tol
//   from_below:  Δ_{p(x0)}φ(x0) <= f(x0) + tol
// Exempt when |∇φ(x0)| < grad_floor. The operator is the full nondivergence
// expansion frozen at x0.
TouchingVerdict interior_viscosity_check(const GridFunction& u,
                                         const ExponentField& P,
                                         const GridFunction& f,
                                         const TestPolynomial& phi,
                                         const Index& x0, TouchSide side,
                                         double tol, double grad_floor = 0.1);

// Free-boundary inequality at x0 within one spacing of the extracted
// interface: from_below (φ⁺ below u):  |∇φ(x0)| <= g(x0) + tol;
//            from_above:               |∇φ(x0)| >= g(x0) - tol.
// Invariant under common positive rescaling of (u, φ, g).
TouchingVerdict fb_condition_check(const GridFunction& u, const PositivePhase& phase,
                                   const std::function<double(const Vec&)>& g,
                                   const TestPolynomial& phi, const Vec& x0,
                                   TouchSide side, double tol);

// Lemma-style strict comparison: v must classify as strict_sub on the region
// and u >= v⁺ - 1e-12 nodewise; then u - v > 0 is required at every node of
// {v > 0} and of the free-boundary band (nodes adjacent to a sign change).
struct ComparisonCheck {
  bool ordered = true;      // u > v held everywhere required
  double min_gap = 0;
  Vec worst_point;
  std::int64_t checked_nodes = 0;
};
ComparisonCheck comparison_principle_check(const GridFunction& u,
                                           const SmoothField& v,
                                           const ComparisonReport& classification);

// Boundary/interior checks for the linearized Neumann problem on the half box
// (grid from solve_neumann_linearized).
//   interior touch (x_n > 0):  from_below: Δφ + (p0-2)∂_nnφ <= tol
//                              from_above: >= -tol
//   boundary touch (x_n = 0):  from_below: ∂_nφ <= tol; from_above: >= -tol.
// With strict_interior_only set, the boundary inequality is only enforced for
// quadratics with Δφ + (p0-2)∂_nnφ > 0 (below) resp. < 0 (above); others are
// exempt.
TouchingVerdict neumann_viscosity_check(const GridFunction& u, double p0,
                                        const TestPolynomial& phi,
                                        const Index& x0, TouchSide side,
                                        double tol,
                                        bool strict_interior_only = false);

}  // namespace pxfb
