#include "pxfb/operators.hpp"

namespace pxfb {

double p_laplacian_from_derivatives(const Vec& grad, const Mat& hess,
                                    double p_at_x, const Vec& grad_p) {
  double g = norm(grad);
  require(g >= kGradientFloor, ErrorKind::gradient_degenerate,
          "p-Laplacian evaluation at degenerate gradient, |grad| = " +
              format_double(g));
  double lap = trace(hess);
  double inf_lap = rayleigh(hess, grad);  // normalized infinity Laplacian
  double log_term = dot(grad_p, grad) * std::log(g);
  return std::pow(g, p_at_x - 2.0) * (lap + (p_at_x - 2.0) * inf_lap + log_term);
}

double eval_p_laplacian_nondiv(const SmoothField& phi, const Vec& x,
                               const ExponentField& P) {
  require(static_cast<bool>(phi.gradient) && static_cast<bool>(phi.hessian),
          ErrorKind::validation, "smooth field needs gradient and hessian");
  return p_laplacian_from_derivatives(phi.gradient(x), phi.hessian(x), P(x),
                                      P.grad(x));
}

std::vector<double> sample_exponent(const GridFunction& u, const ExponentField& P) {
  std::vector<double> p(static_cast<size_t>(u.size()), 0.0);
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    p[static_cast<size_t>(flat)] = P(x);
  });
  return p;
}

FaceGeometry face_flux(const GridFunction& u, const std::vector<double>& p_nodes,
                       const Index& idx, int d, const Vec& shift, double delta) {
  const int n = u.dim();
  Index nb = idx;
  nb[static_cast<size_t>(d)] += 1;
  const std::int64_t fa = u.flatten(idx);
  const std::int64_t fb = u.flatten(nb);

  FaceGeometry fg;
  fg.p_face = 0.5 * (p_nodes[static_cast<size_t>(fa)] + p_nodes[static_cast<size_t>(fb)]);

  const double s = (u.at(fb) - u.at(fa)) / u.spacing(d) + (shift.n ? shift[d] : 0.0);
  double mag_sq = s * s + delta * delta;
  for (int t = 0; t < n; ++t) {
    if (t == d) continue;
    // average of the central differences at the two face endpoints
    double acc = 0;
    for (int which = 0; which < 2; ++which) {
      Index e = which == 0 ? idx : nb;
      Index ep = e, em = e;
      ep[static_cast<size_t>(t)] += 1;
      em[static_cast<size_t>(t)] -= 1;
      acc += (u.at(ep) - u.at(em)) / (2.0 * u.spacing(t));
    }
    double gt = 0.5 * acc + (shift.n ? shift[t] : 0.0);
    mag_sq += gt * gt;
  }
  fg.normal_slope = s;
  fg.magnitude_sq = mag_sq;
  fg.flux = std::pow(mag_sq, 0.5 * (fg.p_face - 2.0)) * s;
  return fg;
}

double discrete_divergence(const GridFunction& u, const std::vector<double>& p_nodes,
                           const Index& idx, const Vec& shift, double delta) {
  double div = 0;
  for (int d = 0; d < u.dim(); ++d) {
    Index lo = idx;
    lo[static_cast<size_t>(d)] -= 1;
    FaceGeometry plus = face_flux(u, p_nodes, idx, d, shift, delta);
    FaceGeometry minus = face_flux(u, p_nodes, lo, d, shift, delta);
    div += (plus.flux - minus.flux) / u.spacing(d);
  }
  return div;
}

GridFunction eval_p_laplacian_div(const GridFunction& u, const ExponentField& P,
                                  const GridFunction& f, double delta) {
  GridFunction::require_compatible(u, f, "eval_p_laplacian_div");
  std::vector<double> p_nodes = sample_exponent(u, P);
  GridFunction res = u;
  res.fill(0.0);
  Vec no_shift;
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
    if (!u.is_interior(idx)) return;
    res.at(flat) = discrete_divergence(u, p_nodes, idx, no_shift, delta) - f.at(flat);
  });
  return res;
}

Vec central_gradient(const GridFunction& u, const Index& idx) {
  require(u.is_interior(idx), ErrorKind::validation,
          "central gradient needs an interior node");
  Vec g(u.dim());
  for (int d = 0; d < u.dim(); ++d) {
    Index p = idx, m = idx;
    p[static_cast<size_t>(d)] += 1;
    m[static_cast<size_t>(d)] -= 1;
    g[d] = (u.at(p) - u.at(m)) / (2.0 * u.spacing(d));
  }
  return g;
}

Mat central_hessian(const GridFunction& u, const Index& idx) {
  require(u.has_margin(idx, 1), ErrorKind::validation,
          "central hessian needs an interior node");
  const int n = u.dim();
  Mat H(n);
  double uc = u.at(idx);
  for (int d = 0; d < n; ++d) {
    Index p = idx, m = idx;
    p[static_cast<size_t>(d)] += 1;
    m[static_cast<size_t>(d)] -= 1;
    double h = u.spacing(d);
    H(d, d) = (u.at(p) - 2 * uc + u.at(m)) / (h * h);
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      Index pp = idx, pm = idx, mp = idx, mm = idx;
      pp[static_cast<size_t>(a)] += 1; pp[static_cast<size_t>(b)] += 1;
      pm[static_cast<size_t>(a)] += 1; pm[static_cast<size_t>(b)] -= 1;
      mp[static_cast<size_t>(a)] -= 1; mp[static_cast<size_t>(b)] += 1;
      mm[static_cast<size_t>(a)] -= 1; mm[static_cast<size_t>(b)] -= 1;
      double v = (u.at(pp) - u.at(pm) - u.at(mp) + u.at(mm)) /
                 (4.0 * u.spacing(a) * u.spacing(b));
      H(a, b) = v;
      H(b, a) = v;
    }
  }
  return H;
}

FrozenCoefficients frozen_coefficients(const GridFunction& u,
                                       const ExponentField& P, const Index& idx) {
  Vec g = central_gradient(u, idx);
  double mag = norm(g);
  require(mag >= kGradientFloor, ErrorKind::gradient_degenerate,
          "frozen coefficients at degenerate gradient");
  Vec x = u.position(idx);
  double p = P(x);
  double scale = std::pow(mag, p - 2.0);

  FrozenCoefficients fc;
  fc.grad_norm = mag;
  fc.p_value = p;
  Vec nu = (1.0 / mag) * g;
  fc.A = scale * (Mat::identity(u.dim()) + (p - 2.0) * Mat::outer(nu, nu));
  fc.b = (scale * std::log(mag)) * P.grad(x);
  return fc;
}

EllipticityBounds ellipticity_bounds(double c1, double C1, double p_min,
                                     double p_max) {
  require(c1 > 0 && C1 >= c1, ErrorKind::validation,
          "gradient bounds must satisfy 0 < c1 <= C1");
  // eigenvalues of A are t^{p-2} and t^{p-2}(p-1) for t = |grad| in [c1, C1].
  // Both are monotone in t at fixed p; t^{p-2} is monotone in p; but
  // t^{p-2}(p-1) has an interior critical point p* = 1 - 1/log(t) when t != 1,
  // so p* joins the corner candidates whenever it lands in [p_min, p_max].
  EllipticityBounds b;
  b.beta1 = std::numeric_limits<double>::infinity();
  b.beta2 = 0;
  for (double t : {c1, C1}) {
    std::vector<double> ps = {p_min, p_max};
    if (std::fabs(std::log(t)) > 0) {
      double p_star = 1.0 - 1.0 / std::log(t);
      if (p_star > p_min && p_star < p_max) ps.push_back(p_star);
    }
    for (double p : ps) {
      double s = std::pow(t, p - 2.0);
      b.beta1 = std::min({b.beta1, s, s * (p - 1.0)});
      b.beta2 = std::max({b.beta2, s, s * (p - 1.0)});
    }
  }
  return b;
}

}  // namespace pxfb
