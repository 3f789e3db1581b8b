#pragma once

// Pointwise and discrete forms of the variable-exponent p-Laplacian.
//
// Nondivergence expansion at a point (requires |∇φ| above the gradient floor):
//   |∇φ|^{p(x)-2} ( Δφ + (p(x)-2) ⟨D²φ ∇φ, ∇φ⟩/|∇φ|²
//                   + ⟨∇p(x), ∇φ⟩ log|∇φ| ).
//
// Discrete divergence form: staggered face fluxes with arithmetic averaging of
// the exponent at faces and a δ-regularized magnitude |(∇u, δ)|.

#include "pxfb/exponent.hpp"
#include "pxfb/grid.hpp"

namespace pxfb {

inline constexpr double kDefaultFluxDelta = 1e-8;

// Evaluate the nondivergence expansion of the operator at x. Throws
// gradient_degenerate if |∇φ(x)| < kGradientFloor.
double eval_p_laplacian_nondiv(const SmoothField& phi, const Vec& x,
                               const ExponentField& P);

// As above but with gradient/Hessian supplied directly (no callables).
double p_laplacian_from_derivatives(const Vec& grad, const Mat& hess,
                                    double p_at_x, const Vec& grad_p);

// Face flux helper shared by the residual evaluator and the solvers.
// The flux d-component at the face between idx and idx+e_d is
//   M^{(p_f-2)/2} * (s + shift_d),  M = |G + shift|² + δ²,
// where s is the exact normal difference, the tangential components of G are
// the averaged central differences at the two endpoints, and p_f is the
// arithmetic mean of the nodal exponent values. Needs the tangential stencil
// of both endpoints to exist; callers only evaluate faces adjacent to
// interior nodes, where it always does.
struct FaceGeometry {
  double normal_slope = 0;  // s + shift_d
  double magnitude_sq = 0;  // M (regularized, shift included)
  double p_face = 0;
  double flux = 0;          // M^{(p_f-2)/2} * normal_slope
};

FaceGeometry face_flux(const GridFunction& u, const std::vector<double>& p_nodes,
                       const Index& idx, int d, const Vec& shift, double delta);

// Discrete divergence of the flux at an interior node (sum of face-flux
// differences over directions, divided by the spacings).
double discrete_divergence(const GridFunction& u, const std::vector<double>& p_nodes,
                           const Index& idx, const Vec& shift, double delta);

// Residual grid div_h(flux) - f at interior nodes; boundary nodes are 0.
// Throws grid_mismatch if u and f disagree on box/shape.
GridFunction eval_p_laplacian_div(const GridFunction& u, const ExponentField& P,
                                  const GridFunction& f,
                                  double delta = kDefaultFluxDelta);

// Nodal exponent cache used by the discrete operators.
std::vector<double> sample_exponent(const GridFunction& u, const ExponentField& P);

// ---------------------------------------------------------------------------
// Frozen coefficients of the nondivergence form at a lattice node:
//   A = |∇u|^{p-2} (I + (p-2) ∇u⊗∇u/|∇u|²),  b = |∇u|^{p-2} log|∇u| ∇p,
// with ∇u the central difference at the node.
// ---------------------------------------------------------------------------

struct FrozenCoefficients {
  Mat A;
  Vec b;
  double grad_norm = 0;
  double p_value = 0;
};

// Node must be interior. Throws gradient_degenerate below the floor.
FrozenCoefficients frozen_coefficients(const GridFunction& u,
                                       const ExponentField& P, const Index& idx);

// Ellipticity bounds for A when c1 <= |∇u| <= C1 and p ranges in
// [p_min, p_max]: eigenvalues of A are |∇u|^{p-2}·{1, p-1}.
struct EllipticityBounds {
  double beta1 = 0, beta2 = 0;
};
EllipticityBounds ellipticity_bounds(double c1, double C1, double p_min,
                                     double p_max);

// Central-difference gradient / second differences at an interior node.
Vec central_gradient(const GridFunction& u, const Index& idx);
Mat central_hessian(const GridFunction& u, const Index& idx);

}  // namespace pxfb
