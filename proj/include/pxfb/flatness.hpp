#pragma once

// Flatness measurement, direction search, the Harnack-type ratio, the
// dichotomy probe, the Hölder-modulus fit, and the improvement-of-flatness
// iteration with dyadic rescaling.

#include <optional>
#include <string>
#include <vector>

#include "pxfb/solve.hpp"

namespace pxfb {

// Two-sided plane sandwich of u >= 0 on the lattice ball B_r(center):
//   (x·ν + a)^+ <= u(x) <= (x·ν + b)^+ for all ball nodes,
// with a maximal and b minimal; flatness eps = (b - a)/r. The lower offset is
// constrained at every node (for u >= 0 it reduces to a <= u - x·ν); the upper
// offset only at nodes with u > 0 (positive-part semantics). x·ν is measured
// relative to `center`.
struct FlatnessCertificate {
  Vec center;
  double radius = 0;
  Vec direction;       // unit ν
  double lower = 0;    // a
  double upper = 0;    // b
  double eps = 0;      // (b - a)/radius
  int scale_index = 0; // k within an iteration trace, 0 otherwise
  std::int64_t node_count = 0;

  std::string to_json_string() const;
};

// Requires u >= -1e-12 on the ball (validation error otherwise) and at least
// one ball node. |ν| is normalized internally.
FlatnessCertificate measure_flatness(const GridFunction& u, const Vec& center,
                                     double radius, const Vec& direction);

// Re-scan of a stored certificate against u: max violation of the two
// envelope inequalities over ball nodes (0 when the certificate is exact).
double certificate_violation(const GridFunction& u, const FlatnessCertificate& cert);

// Minimizes eps over unit directions near `seed`: tangent-space grid at
// angular resolution 0.25 degrees over a +-15 degree cap, refined locally
// twice (5x each). The candidate set always contains the seed itself.
// Deterministic tie-break: first candidate in enumeration order wins.
FlatnessCertificate best_direction(const GridFunction& u, const Vec& center,
                                   double radius, const Vec& seed);

// Empirical constant of the quasi-Harnack inequality
//   sup_{B_R} v <= C ( inf_{B_R} v + R (‖f‖_{L∞(B_4R)}^{1/(p_max-1)} + C) ):
// the positive root of R C² + (inf + R‖f‖^{1/(p_max-1)}) C - sup = 0.
// Requires v >= 0 on B_R and B_4R inside the grid box. Returns 0 when
// sup v = 0. For constant positive v the root is <= 1.
struct HarnackRatio {
  double c_emp = 0;
  double sup = 0, inf = 0;
  double f_term = 0;   // ‖f‖_{L∞(B_4R)}^{1/(p_max-1)}
};
HarnackRatio harnack_ratio(const GridFunction& v, const GridFunction& f,
                           const ExponentField& P, const Vec& center, double R);

// Dichotomy probe around q(x) = x_n + sigma, |sigma| < 1/20. Verifies the
// hypothesis q⁺ <= u <= (q+eps)^+ on lattice B_1 (tolerance 1e-12), branches
// on u(x0) vs (q(x0)+eps/2)^+ at x0 = (1/10) e_n (multilinear interpolation),
// and scans B̄_{1/2}:
//   c_lift = clamp(min (u - q)/eps, 0, 1)   — largest c with u >= (q+c eps)^+
//   c_drop = clamp(min over {u>0} of 1 - (u-q)/eps, 0, 1)
//                                           — largest c with u <= (q+(1-c)eps)^+
// The headline `c` is c_lift (the direct scan).
enum class DichotomyBranch { upper, lower };
struct DichotomyReport {
  DichotomyBranch branch = DichotomyBranch::lower;
  double c = 0;        // headline: c_lift
  double c_lift = 0;
  double c_drop = 0;
  double probe_value = 0;  // u(x0)
  double probe_threshold = 0;
};
DichotomyReport dichotomy_probe(const GridFunction& u, double sigma, double eps);

// Hölder-modulus fit for the renormalized difference w = (u - x·ν)/eps around
// x0: per dyadic annulus [2^{-j-1}, 2^{-j}]·r_max (outer radius as abscissa),
// oscillation sup |w(x) - w(x0)| over annulus nodes with |x - x0| >= eps/eps_bar,
// then least squares of log(osc) on log(radius). Sampling restricted to the
// closure of {u > 0} unless restrict_to_phase is false. Constant w gives
// C_emp = 0 with the exponent fit skipped.
struct HolderFit {
  double C_emp = 0;
  double gamma_emp = 0;
  double fit_residual = 0;  // rms residual of the log-log fit
  int annuli_used = 0;
  bool fitted = false;
};
HolderFit holder_modulus(const GridFunction& u, const Vec& direction,
                         const Vec& x0, double eps, double eps_bar,
                         bool restrict_to_phase = true);

// ---------------------------------------------------------------------------
// Improvement-of-flatness iteration: the flatness of u_k(x) = u(rho_k x)/rho_k,
// rho_k = rbar^k, equals the flatness of u over B_{rho_k} divided by rho_k, so
// each scale is measured directly on the original lattice ball (no resampling;
// interpolation would smear the free-boundary kink by O(h)/rho_k). Directions
// come from best_direction seeded with the previous scale's direction. Stops
// (with a resolution_exhausted marker, or error if requested) once rho_k < 4h.
// ---------------------------------------------------------------------------

struct RescaleBoundRecord {
  // Sup norms of the rescaled data f_k(x) = rho_k f(rho_k x), g_k = g(rho_k x),
  // and rho_k ∇p(rho_k x), against the threshold eps_k² with eps_k = 2^{-k}eps0.
  double f_sup = 0, g_dev_sup = 0, grad_p_sup = 0;
  double threshold = 0;
  bool f_ok = true, g_ok = true, p_ok = true;
};

struct IterationScale {
  int k = 0;
  double rho = 1;
  FlatnessCertificate certificate;
  double interp_floor = 0;   // kink interpolation noise bound (h/4)/rho
  bool resolvable = false;   // rho >= 4h and eps >= 2 * interp_floor
  std::optional<RescaleBoundRecord> bounds;
};

struct IterationTrace {
  std::vector<IterationScale> scales;
  double rbar = 0.5;
  double alpha_hat = 0;        // slope of log eps on log rho over resolvable scales
  bool alpha_fitted = false;
  double mean_ratio = 0;       // geometric mean of eps_{k+1}/eps_k over
                               // consecutive resolvable pairs
  bool ratio_available = false;
  Vec recenter_shift;          // translation applied to bring 0 onto F(u)
  double direction_chain_sum = 0;  // Σ |ν_{k+1} - ν_k|

  std::string to_json_string() const;
  void save_csv(const std::string& path) const;
};

struct IterationConfig {
  double rbar = 0.5;
  int max_scales = 8;          // K
  Vec seed_direction;          // default e_n
  double eps0 = 0.5;           // threshold scale for the rescaled-data bounds
  bool recenter = true;        // translate so the interface passes through 0
  bool error_on_exhaustion = false;  // throw instead of stopping at rho < 4h
  // Optional data fields to rescale and bound-check.
  std::function<double(const Vec&)> f;
  std::function<double(const Vec&)> g;
  const ExponentField* P = nullptr;
};

IterationTrace flatness_iteration(const GridFunction& u, const IterationConfig& cfg);

}  // namespace pxfb
