#pragma once

// ExponentField: the variable exponent p(x) together with the scalar data the
// estimates depend on (p_min, p_max, a Lipschitz bound for ∇p, the base value
// p0 = p(base_point), and the flatness parameter theta).
//
// Invariant: 1 < p_min <= p(x) <= p_max everywhere the field is evaluated.

#include "pxfb/common.hpp"

namespace pxfb {

class ExponentField {
 public:
  // Validates 1 < p_min <= p_max. grad may be empty; then a central-difference
  // fallback with step fd_step is used.
  ExponentField(std::function<double(const Vec&)> p,
                std::function<Vec(const Vec&)> grad, double p_min, double p_max,
                double lipschitz, Vec base_point, double theta = 1.0);

  static ExponentField constant(int dim, double p0);
  // p(x) = p_center + slope · (x - base)  (no clamping; caller guarantees the
  // range stays within [p_min, p_max] on the domain of use).
  static ExponentField affine(double p_min, double p_max, double p_center,
                              Vec slope, Vec base_point);
  // Synthetic near-flat field: p(x) = p_center + grad_norm * x[axis], with
  // ‖∇p‖ = grad_norm exactly. Used by certification sweeps; requires the
  // variation over radius `extent` to fit inside [p_min, p_max].
  static ExponentField synthetic_flat(int dim, double p_min, double p_max,
                                      double grad_norm, double extent,
                                      int axis = 0);

  double operator()(const Vec& x) const;
  Vec grad(const Vec& x) const;

  double p_min() const { return p_min_; }
  double p_max() const { return p_max_; }
  double lipschitz() const { return lipschitz_; }
  double theta() const { return theta_; }
  double p0() const { return p0_; }
  const Vec& base_point() const { return base_; }
  int dim() const { return base_.dim(); }
  bool is_constant() const { return constant_; }

  // Largest |∇p| over a finite sample set; used by bound assertions.
  double max_grad_norm(const std::vector<Vec>& samples) const;

 private:
  std::function<double(const Vec&)> p_;
  std::function<Vec(const Vec&)> grad_;
  double p_min_, p_max_, lipschitz_, theta_, p0_;
  Vec base_;
  bool constant_ = false;
  double fd_step_ = 1e-6;
};

}  // namespace pxfb
