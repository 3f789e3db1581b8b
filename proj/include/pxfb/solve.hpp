#pragma once

// Finite-difference solvers: nonlinear Gauss-Seidel with per-node scalar
// Newton (safeguarded by bisection), lexicographic sweeps, optional
// over-relaxation with a divergence safeguard, optional nested iteration
// (coarse-grid initial guesses). Energy minimization is exact cyclic descent
// (ω = 1) with the two-candidate truncation update, so the discrete energy is
// nonincreasing sweep to sweep.

#include <optional>
#include <string>
#include <vector>

#include "pxfb/operators.hpp"

namespace pxfb {

struct SolveConfig {
  int max_iterations = 20000;     // sweeps
  double tolerance = 1e-9;        // sup-norm residual target
  double relaxation = 0;          // 0 = auto (Poisson-optimal, capped, guarded)
  double flux_delta = kDefaultFluxDelta;
  std::uint64_t seed = 0;         // reserved for randomized restarts; the
                                  // default sweep order is deterministic
  int nested_levels = -1;         // -1 = auto coarse-to-fine initial guesses
  double energy_tolerance = 0;    // 0 = auto: 1e-12 * (1 + |E|) per sweep
};

struct ConvergenceHistory {
  struct Entry {
    int iteration = 0;
    double residual = 0;
    double energy = 0;
  };
  std::vector<Entry> entries;
  void save_csv(const std::string& path) const;
};

struct SolveResult {
  GridFunction u;
  ConvergenceHistory history;
  int iterations = 0;
  double final_residual = 0;
};

// Dirichlet problem div(|(∇u,δ)|^{p(x)-2}∇u) = f on the active set.
// By default the active set is the interior and `boundary` supplies the data
// on boundary nodes. With an active mask (1 = unknown), every inactive node is
// fixed to `boundary`'s value; every neighbor of an active node must exist.
// Throws nonconvergence (payload = final residual) if the budget is exhausted.
SolveResult solve_dirichlet(const ExponentField& P, const GridFunction& f,
                            const GridFunction& boundary, const SolveConfig& cfg,
                            const std::vector<std::uint8_t>* active = nullptr);

// Shifted problem div(|(∇v+e,δ)|^{p(x)-2}(∇v+e)) = f, |e| = 1.
SolveResult solve_shifted(const ExponentField& P, const GridFunction& f,
                          const Vec& e, const GridFunction& boundary,
                          const SolveConfig& cfg,
                          const std::vector<std::uint8_t>* active = nullptr);

// ---------------------------------------------------------------------------
// One-phase energy minimization
//   E(v) = ∫ ( |(∇v,δ)|^{p(x)}/p(x) + λ(x) χ_{v>0} + f(x) v ) dx,
// with the phase weight λ = (1 - 1/p(x)) Q(x)^{p(x)}, the normalization for
// which the optimal-slab interface slope is exactly Q(x). Gradient term by
// cell-centered (midpoint) quadrature; χ and f·v terms by nodal quadrature so
// the per-node truncated/untruncated comparison is exact.
// ---------------------------------------------------------------------------

struct EnergyProblem {
  ExponentField P;
  GridFunction f;
  GridFunction Q;          // Q >= 0 (validated)
  GridFunction boundary;   // Dirichlet data on all box boundary nodes

  EnergyProblem(ExponentField P_, GridFunction f_, GridFunction Q_,
                GridFunction boundary_);
  double phase_weight(std::int64_t flat, const std::vector<double>& p_nodes) const;
};

struct EnergyResult {
  GridFunction u;
  // Sweeps of the final true-weight stage; the residual column carries the
  // per-sweep decrease, so the energy column is monotone.
  ConvergenceHistory history;
  int iterations = 0;  // total sweeps at this level, warm-up stages included
  double final_energy = 0;
  double final_decrease = 0;
};

double discrete_energy(const GridFunction& u, const EnergyProblem& prob,
                       double delta);

// Pointwise cyclic minimization; each stage terminates when the energy
// decrease per sweep falls below the tolerance. Self-chosen starts (no
// `initial`) are preceded by a phase-weight continuation that walks the
// interface out of the single-node-update hysteresis band before the true
// functional is minimized; an explicit initial guess skips the warm-up.
// Critical point of the discrete functional only; no global-minimality claim.
EnergyResult minimize_energy(const EnergyProblem& prob, const SolveConfig& cfg,
                             const GridFunction* initial = nullptr);

// ---------------------------------------------------------------------------
// Linearized Neumann problem on a half box [-rho, rho]^{n-1} × [0, rho]:
//   Δu + (p0-2) ∂_nn u = 0,  ∂_n u = 0 on {x_n = 0}   (reflection ghost),
// Dirichlet data on the remaining sides. Requires p0 > 1.
// ---------------------------------------------------------------------------

SolveResult solve_neumann_linearized(double p0, double rho, int dim,
                                     const std::function<double(const Vec&)>& data,
                                     double h, const SolveConfig& cfg);

// Quadratic-remainder constant of a half-box solution at the origin:
//   max over nodes in B_r ∩ {x_n >= 0} of |u(x) - u(0) - ∇u(0)·x| / r²,
// with ∇u(0) by central differences tangentially and 0 normally (the boundary
// condition). Origin must be a lattice node on {x_n = 0}.
double quadratic_remainder_constant(const GridFunction& u, double r);

}  // namespace pxfb
