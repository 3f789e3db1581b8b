#include "pxfb/exponent.hpp"

namespace pxfb {

ExponentField::ExponentField(std::function<double(const Vec&)> p,
                             std::function<Vec(const Vec&)> grad, double p_min,
                             double p_max, double lipschitz, Vec base_point,
                             double theta)
    : p_(std::move(p)),
      grad_(std::move(grad)),
      p_min_(p_min),
      p_max_(p_max),
      lipschitz_(lipschitz),
      theta_(theta),
      base_(base_point) {
  require(p_min_ > 1.0, ErrorKind::validation,
          "exponent range must satisfy p_min > 1, got p_min = " +
              format_double(p_min_));
  require(p_min_ <= p_max_, ErrorKind::validation,
          "exponent range must satisfy p_min <= p_max");
  require(lipschitz_ >= 0, ErrorKind::validation, "Lipschitz bound must be >= 0");
  require(theta_ > 0, ErrorKind::validation, "theta must be > 0");
  require(static_cast<bool>(p_), ErrorKind::validation, "exponent callable is empty");
  p0_ = p_(base_);
  require(p0_ >= p_min_ - 1e-12 && p0_ <= p_max_ + 1e-12, ErrorKind::validation,
          "p(base_point) outside [p_min, p_max]");
}

ExponentField ExponentField::constant(int dim, double p0) {
  ExponentField f([p0](const Vec&) { return p0; },
                  [dim](const Vec&) { return Vec::zero(dim); }, p0, p0, 0.0,
                  Vec::zero(dim));
  f.constant_ = true;
  return f;
}

ExponentField ExponentField::affine(double p_min, double p_max, double p_center,
                                    Vec slope, Vec base_point) {
  Vec base = base_point;
  Vec s = slope;
  return ExponentField(
      [p_center, s, base](const Vec& x) { return p_center + dot(s, x - base); },
      [s](const Vec&) { return s; }, p_min, p_max, norm(s), base_point);
}

ExponentField ExponentField::synthetic_flat(int dim, double p_min, double p_max,
                                            double grad_norm, double extent,
                                            int axis) {
  double center = 0.5 * (p_min + p_max);
  require(grad_norm * extent <= 0.5 * (p_max - p_min) + 1e-15,
          ErrorKind::validation,
          "synthetic exponent variation does not fit inside [p_min, p_max]");
  Vec slope = Vec::axis(dim, axis, grad_norm);
  return affine(p_min, p_max, center, slope, Vec::zero(dim));
}

double ExponentField::operator()(const Vec& x) const {
  double v = p_(x);
  require(v >= p_min_ - 1e-9 && v <= p_max_ + 1e-9, ErrorKind::validation,
          "exponent sample outside declared [p_min, p_max]");
  return v;
}

Vec ExponentField::grad(const Vec& x) const {
  if (grad_) return grad_(x);
  Vec g(x.dim());
  for (int d = 0; d < x.dim(); ++d) {
    Vec xp = x, xm = x;
    xp[d] += fd_step_;
    xm[d] -= fd_step_;
    g[d] = (p_(xp) - p_(xm)) / (2 * fd_step_);
  }
  return g;
}

double ExponentField::max_grad_norm(const std::vector<Vec>& samples) const {
  double m = 0;
  for (const Vec& x : samples) m = std::max(m, norm(grad(x)));
  return m;
}

}  // namespace pxfb
