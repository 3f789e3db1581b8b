#include "pxfb/norms.hpp"

namespace pxfb {

namespace {

// Visits cell centers: fn(center, mean |u| at center). Midpoint rule, cell
// value by multilinear average of the 2^n corners.
template <typename Fn>
void for_each_cell(const GridFunction& u, Fn&& fn) {
  const int n = u.dim();
  Index cells{};
  std::int64_t total = 1;
  for (int d = 0; d < n; ++d) {
    cells[static_cast<size_t>(d)] = u.shape(d) - 1;
    total *= cells[static_cast<size_t>(d)];
  }
  const int corners = 1 << n;
  const double inv_corners = 1.0 / corners;
  Index c{};
  for (std::int64_t k = 0; k < total; ++k) {
    double acc = 0;
    for (int bit = 0; bit < corners; ++bit) {
      Index idx = c;
      for (int d = 0; d < n; ++d)
        idx[static_cast<size_t>(d)] += (bit >> d) & 1;
      acc += u.at(idx);
    }
    Vec center = u.position(c);
    for (int d = 0; d < n; ++d) center[d] += 0.5 * u.spacing(d);
    fn(center, acc * inv_corners);
    for (int d = n - 1; d >= 0; --d) {
      if (++c[static_cast<size_t>(d)] < cells[static_cast<size_t>(d)]) break;
      c[static_cast<size_t>(d)] = 0;
    }
  }
}

double cell_volume(const GridFunction& u) {
  double v = 1;
  for (int d = 0; d < u.dim(); ++d) v *= u.spacing(d);
  return v;
}

}  // namespace

double modular(const GridFunction& u, const ExponentField& P) {
  return modular_scaled(u, P, 1.0);
}

double modular_scaled(const GridFunction& u, const ExponentField& P,
                      double inv_lambda) {
  double vol = cell_volume(u);
  double acc = 0;
  for_each_cell(u, [&](const Vec& center, double mean) {
    double val = std::fabs(mean) * inv_lambda;
    if (val > 0) acc += vol * std::pow(val, P(center));
  });
  return acc;
}

double luxemburg_norm(const GridFunction& u, const ExponentField& P,
                      double rel_tol) {
  double sup = u.sup_norm();
  if (sup == 0.0) return 0.0;

  double m = modular(u, P);
  if (m == 0.0) return 0.0;  // |u| vanishes at every cell center

  double measure = u.box().volume();
  double lo = 0.5 * sup * std::pow(measure, 1.0 / P.p_max());
  double hi = 2.0 * sup * std::pow(1.0 + measure, 1.0 / P.p_min());

  // widen until the bracket straddles modular = 1 (modular decreasing in λ)
  int guard = 0;
  while (modular_scaled(u, P, 1.0 / hi) > 1.0) {
    hi *= 2.0;
    require(++guard < 200, ErrorKind::validation,
            "luxemburg bracket widening failed (upper)");
  }
  guard = 0;
  while (lo > 0 && modular_scaled(u, P, 1.0 / lo) <= 1.0) {
    lo *= 0.5;
    require(++guard < 200, ErrorKind::validation,
            "luxemburg bracket widening failed (lower)");
  }

  while ((hi - lo) > rel_tol * hi) {
    double mid = 0.5 * (lo + hi);
    if (modular_scaled(u, P, 1.0 / mid) <= 1.0)
      hi = mid;
    else
      lo = mid;
  }
  return hi;  // smallest λ with modular(u/λ) <= 1 within tolerance
}

}  // namespace pxfb
