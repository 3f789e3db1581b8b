#pragma once

// Variable-exponent modular and Luxemburg norm.
//
//   modular(u)   = ∫ |u(x)|^{p(x)} dx      (midpoint rule on cells)
//   luxemburg(u) = inf { λ > 0 : modular(u/λ) <= 1 }   (bisection)
//
// Bracket invariant, asserted by tests: with m = modular(u),
//   min(m^{1/p_min}, m^{1/p_max}) <= ‖u‖ <= max(m^{1/p_min}, m^{1/p_max}).

#include "pxfb/exponent.hpp"
#include "pxfb/grid.hpp"

namespace pxfb {

// Midpoint quadrature: cell centers, u by multilinear average of the corners,
// p evaluated at the center.
double modular(const GridFunction& u, const ExponentField& P);

// modular(u/λ) for the bisection without building scaled copies.
double modular_scaled(const GridFunction& u, const ExponentField& P,
                      double inv_lambda);

// Bisection to relative tolerance 1e-10. The initial bracket
// [‖u‖_∞ m^{1/p_max}/2, ‖u‖_∞ (1+m)^{1/p_min}·2] is widened geometrically
// until it straddles modular = 1. Returns 0 for u ≡ 0.
double luxemburg_norm(const GridFunction& u, const ExponentField& P,
                      double rel_tol = 1e-10);

}  // namespace pxfb
