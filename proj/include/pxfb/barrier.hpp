#pragma once

// Radial comparison barriers on an annulus and their certification.
//
//   w(x) = c1 |x-x0|^{-γ} - c2            (radial profile)
//   v(x) = q(x) + (c0/2) ε (w(x) - 1),    q(x) = x_n + c3   (perturbed plane)
//
// γ comes from the four-term formula below and satisfies, for the attached
// (n, p_min, p_max):
//   (A) γ(p_min-1) + p_min - n >= 1
//   (B) (γ+2)(p_min-1) - n    >= 1
//   (C) γ + 4 - n - p_max     >= 1
//
// Certification samples the annulus and checks, pointwise,
//   w:  Δ_{p(x)} w >= c_floor           with c_floor = min(c1^{p_min-1}, c1^{p_max-1})/2
//   v:  1/2 <= |∇v| <= 2  and  Δ_{p(x)} v > ε²
// reporting the worst margin and where it occurred.

#include <optional>
#include <string>

#include "pxfb/operators.hpp"

namespace pxfb {

// γ(n, p_min, p_max) = max{1, (1+n-p_min)/(p_min-1), (1+n)/(p_min-1) - 2,
//                          n + p_max - 3}. Requires p_min > 1.
double gamma_exponent(int n, double p_min, double p_max);

struct ConditionSlack {
  double cond_growth = 0;     // γ(p_min-1) + p_min - n - 1
  double cond_laplacian = 0;  // (γ+2)(p_min-1) - n - 1
  double cond_range = 0;      // γ + 4 - n - p_max - 1
};
ConditionSlack gamma_condition_slack(double gamma, int n, double p_min,
                                     double p_max);

enum class BarrierKind { radial_w, perturbed_v };

struct Barrier {
  BarrierKind kind = BarrierKind::radial_w;
  Vec center;              // x0
  double gamma = 1;
  double c0 = 1, c1 = 1, c2 = 0, c3 = 0;
  double r_inner = 0.1, r_outer = 1.0;  // annulus radii, 0 < r_inner < r_outer
  double eps = 0;          // perturbation size (perturbed_v only)
  int n = 2;               // ambient dimension
  double p_min = 2, p_max = 2;  // exponent range the γ conditions refer to

  // Validates γ >= 1, the three conditions, the annulus, c1 > 0, c0 > 0.
  void validate() const;

  static Barrier radial(int n, double p_min, double p_max, Vec center,
                        double c1, double c2, double r_inner, double r_outer);
  static Barrier perturbed(int n, double p_min, double p_max, Vec center,
                           double c0, double c1, double c3, double r_inner,
                           double r_outer, double eps);

  // Analytic derivatives; x must lie in the closed annulus (out_of_annulus
  // error otherwise). For perturbed_v the plane coordinate is x[n-1].
  double value(const Vec& x) const;
  Vec grad(const Vec& x) const;
  Mat hess(const Vec& x) const;
  SmoothField as_field() const;
};

struct BarrierEval {
  double value = 0;
  Vec gradient;
  double p_laplacian = 0;  // nondivergence expansion with analytic derivatives
};
BarrierEval eval_barrier(const Barrier& b, const Vec& x, const ExponentField& P);

// min(c1^{p_min-1}, c1^{p_max-1}) / 2: the certified lower bound for Δ_{p(x)}w.
double certification_floor(double c1, double p_min, double p_max);

struct CertificationReport {
  std::string inequality;   // which bound was certified
  bool pass = false;        // pass ⇔ min_margin > 0
  double min_margin = 0;
  Vec worst_point;
  std::int64_t sample_count = 0;
  int samples_per_axis = 0;
  double threshold = 0;     // the bound the margin is measured against
  std::string parameters;   // JSON snapshot of barrier + exponent data
  std::string to_json_string() const;
};

// Samples the annulus on a samples_per_axis^n lattice over the bounding box.
// threshold_override replaces the default floor (used by the inflated-threshold
// failure tests). Deterministic lexicographic reduction.
CertificationReport certify_barrier_w(const Barrier& b, const ExponentField& P,
                                      int samples_per_axis = 64,
                                      std::optional<double> threshold_override = {});

// Certifies both the gradient pinch 1/2 <= |∇v| <= 2 and the strict sign
// Δ_{p(x)}v > ε²; min_margin is the worse of the two margins.
CertificationReport certify_barrier_v(const Barrier& b, const ExponentField& P,
                                      int samples_per_axis = 64);

struct BarrierConstants {
  double gamma = 0;
  double c_floor = 0;            // certified lower bound for Δ_{p(x)}w
  double eps0_empirical = 0;     // largest grid ε with certify_barrier_w passing
  double eps1_empirical = 0;     // largest grid ε with certify_barrier_v passing
  std::string note;              // labels the thresholds as empirical
};

// Closed-form constants plus empirical ε thresholds found by sweeping
// ε = 2^{-1} .. 2^{-30} with a synthetic exponent field of ‖∇p‖ = ε^{1+θ}.
// The empirical value is the largest grid ε such that it and every smaller
// grid ε pass. Geometry defaults to the unit annulus [0.1, 1] at the origin.
BarrierConstants barrier_constants(int n, double p_min, double p_max, double c0,
                                   double c1, double theta,
                                   double r_inner = 0.1, double r_outer = 1.0,
                                   int samples_per_axis = 32);

// ---------------------------------------------------------------------------
// Strict comparison classification of an analytic candidate on a sample box:
//   strict_sub:   Δ_{p(x)}v - f > 0 on {v > 0},  |∇v| - g > 0 on F(v)
//   strict_super: both reversed (< 0 margins)
// Free boundary points come from the sampled sign pattern (sub-cell crossings).
// ---------------------------------------------------------------------------

enum class ComparisonClass { strict_sub, strict_super, neither };

struct ComparisonReport {
  ComparisonClass verdict = ComparisonClass::neither;
  double interior_margin = 0;   // min over {v>0} samples of Δ_{p(x)}v - f
  double boundary_margin = 0;   // min over F(v) samples of |∇v| - g
  double interior_margin_super = 0;  // min of f - Δ_{p(x)}v
  double boundary_margin_super = 0;  // min of g - |∇v|
  std::int64_t positive_samples = 0;
  std::int64_t boundary_samples = 0;
};

ComparisonReport classify_comparison(const SmoothField& v, const ExponentField& P,
                                     const std::function<double(const Vec&)>& f,
                                     const std::function<double(const Vec&)>& g,
                                     const Box& region, int samples_per_axis);

}  // namespace pxfb
