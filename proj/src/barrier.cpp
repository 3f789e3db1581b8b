#include "pxfb/barrier.hpp"

#include <algorithm>

#include "json.hpp"
#include "pxfb/parallel.hpp"

namespace pxfb {

double gamma_exponent(int n, double p_min, double p_max) {
  require(n >= 1, ErrorKind::validation, "dimension must be >= 1");
  require(p_min > 1.0, ErrorKind::validation,
          "gamma_exponent requires p_min > 1");
  require(p_min <= p_max, ErrorKind::validation,
          "gamma_exponent requires p_min <= p_max");
  double g1 = 1.0;
  double g2 = (1.0 + n - p_min) / (p_min - 1.0);
  double g3 = (1.0 + n) / (p_min - 1.0) - 2.0;
  double g4 = n + p_max - 3.0;
  return std::max({g1, g2, g3, g4});
}

ConditionSlack gamma_condition_slack(double gamma, int n, double p_min,
                                     double p_max) {
  ConditionSlack s;
  s.cond_growth = gamma * (p_min - 1.0) + p_min - n - 1.0;
  s.cond_laplacian = (gamma + 2.0) * (p_min - 1.0) - n - 1.0;
  s.cond_range = gamma + 4.0 - n - p_max - 1.0;
  return s;
}

void Barrier::validate() const {
  require(n >= 1 && n <= kMaxDim, ErrorKind::validation,
          "barrier dimension outside [1,4]");
  require(center.dim() == n, ErrorKind::validation,
          "barrier center dimension mismatch");
  require(p_min > 1.0 && p_min <= p_max, ErrorKind::validation,
          "barrier exponent range invalid (need 1 < p_min <= p_max)");
  require(c1 > 0, ErrorKind::validation, "barrier requires c1 > 0");
  require(r_inner > 0 && r_inner < r_outer, ErrorKind::validation,
          "barrier annulus requires 0 < r_inner < r_outer");
  require(gamma >= 1.0 - 1e-12, ErrorKind::validation,
          "barrier exponent gamma must be >= 1");
  ConditionSlack s = gamma_condition_slack(gamma, n, p_min, p_max);
  require(s.cond_growth >= -1e-12, ErrorKind::validation,
          "barrier gamma violates the growth condition");
  require(s.cond_laplacian >= -1e-12, ErrorKind::validation,
          "barrier gamma violates the laplacian condition");
  require(s.cond_range >= -1e-12, ErrorKind::validation,
          "barrier gamma violates the range condition");
  if (kind == BarrierKind::perturbed_v) {
    require(c0 > 0, ErrorKind::validation, "perturbed barrier requires c0 > 0");
    require(eps >= 0, ErrorKind::validation, "perturbed barrier requires eps >= 0");
  }
}

Barrier Barrier::radial(int n, double p_min, double p_max, Vec center, double c1,
                        double c2, double r_inner, double r_outer) {
  Barrier b;
  b.kind = BarrierKind::radial_w;
  b.n = n;
  b.p_min = p_min;
  b.p_max = p_max;
  b.center = center;
  b.gamma = gamma_exponent(n, p_min, p_max);
  b.c1 = c1;
  b.c2 = c2;
  b.r_inner = r_inner;
  b.r_outer = r_outer;
  b.validate();
  return b;
}

Barrier Barrier::perturbed(int n, double p_min, double p_max, Vec center,
                           double c0, double c1, double c3, double r_inner,
                           double r_outer, double eps) {
  Barrier b;
  b.kind = BarrierKind::perturbed_v;
  b.n = n;
  b.p_min = p_min;
  b.p_max = p_max;
  b.center = center;
  b.gamma = gamma_exponent(n, p_min, p_max);
  b.c0 = c0;
  b.c1 = c1;
  b.c3 = c3;
  b.r_inner = r_inner;
  b.r_outer = r_outer;
  b.eps = eps;
  b.validate();
  return b;
}

namespace {

struct RadialFrame {
  double r;
  Vec offset;  // x - center
};

RadialFrame radial_frame(const Barrier& b, const Vec& x) {
  RadialFrame f;
  f.offset = x - b.center;
  f.r = norm(f.offset);
  require(f.r >= b.r_inner - 1e-12 && f.r <= b.r_outer + 1e-12,
          ErrorKind::out_of_annulus,
          "barrier evaluated outside its annulus (r = " + format_double(f.r) + ")");
  return f;
}

double w_value(const Barrier& b, double r) {
  return b.c1 * std::pow(r, -b.gamma) - b.c2;
}

Vec w_grad(const Barrier& b, const RadialFrame& f) {
  double scale = -b.c1 * b.gamma * std::pow(f.r, -b.gamma - 2.0);
  return scale * f.offset;
}

Mat w_hess(const Barrier& b, const RadialFrame& f) {
  double scale = b.c1 * b.gamma * std::pow(f.r, -b.gamma - 2.0);
  Vec nu = (1.0 / f.r) * f.offset;
  Mat m = Mat::outer(nu, nu);
  Mat out(b.n);
  for (int i = 0; i < b.n; ++i)
    for (int j = 0; j < b.n; ++j)
      out(i, j) = scale * ((b.gamma + 2.0) * m(i, j) - (i == j ? 1.0 : 0.0));
  return out;
}

}  // namespace

double Barrier::value(const Vec& x) const {
  RadialFrame f = radial_frame(*this, x);
  double w = w_value(*this, f.r);
  if (kind == BarrierKind::radial_w) return w;
  return x[n - 1] + c3 + 0.5 * c0 * eps * (w - 1.0);
}

Vec Barrier::grad(const Vec& x) const {
  RadialFrame f = radial_frame(*this, x);
  Vec gw = w_grad(*this, f);
  if (kind == BarrierKind::radial_w) return gw;
  Vec g = (0.5 * c0 * eps) * gw;
  g[n - 1] += 1.0;
  return g;
}

Mat Barrier::hess(const Vec& x) const {
  RadialFrame f = radial_frame(*this, x);
  Mat hw = w_hess(*this, f);
  if (kind == BarrierKind::radial_w) return hw;
  return (0.5 * c0 * eps) * hw;
}

SmoothField Barrier::as_field() const {
  Barrier b = *this;
  return SmoothField{
      [b](const Vec& x) { return b.value(x); },
      [b](const Vec& x) { return b.grad(x); },
      [b](const Vec& x) { return b.hess(x); },
  };
}

BarrierEval eval_barrier(const Barrier& b, const Vec& x, const ExponentField& P) {
  BarrierEval e;
  e.value = b.value(x);
  e.gradient = b.grad(x);
  e.p_laplacian =
      p_laplacian_from_derivatives(e.gradient, b.hess(x), P(x), P.grad(x));
  return e;
}

double certification_floor(double c1, double p_min, double p_max) {
  return 0.5 * std::min(std::pow(c1, p_min - 1.0), std::pow(c1, p_max - 1.0));
}

std::string CertificationReport::to_json_string() const {
  nlohmann::json j;
  j["inequality"] = inequality;
  j["pass"] = pass;
  j["min_margin"] = min_margin;
  for (int d = 0; d < worst_point.dim(); ++d) j["worst_point"].push_back(worst_point[d]);
  j["sample_count"] = sample_count;
  j["samples_per_axis"] = samples_per_axis;
  j["threshold"] = threshold;
  j["parameters"] = nlohmann::json::parse(parameters.empty() ? "{}" : parameters);
  return j.dump(2);
}

namespace {

std::vector<Vec> annulus_samples(const Barrier& b, int samples_per_axis) {
  require(samples_per_axis >= 2, ErrorKind::validation,
          "need at least 2 samples per axis");
  std::vector<Vec> pts;
  const int n = b.n;
  std::array<int, kMaxDim> idx{};
  std::int64_t total = 1;
  for (int d = 0; d < n; ++d) total *= samples_per_axis;
  const double step = 2.0 * b.r_outer / (samples_per_axis - 1);
  for (std::int64_t k = 0; k < total; ++k) {
    Vec x(n);
    for (int d = 0; d < n; ++d)
      x[d] = b.center[d] - b.r_outer + step * idx[static_cast<size_t>(d)];
    double r = norm(x - b.center);
    if (r >= b.r_inner && r <= b.r_outer) pts.push_back(x);
    for (int d = n - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < samples_per_axis) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
  require(!pts.empty(), ErrorKind::validation,
          "annulus sampling produced no points");
  return pts;
}

std::string barrier_parameters_json(const Barrier& b, const ExponentField& P,
                                    double delta_unused = 0) {
  (void)delta_unused;
  nlohmann::json j;
  j["kind"] = b.kind == BarrierKind::radial_w ? "radial_w" : "perturbed_v";
  j["gamma"] = b.gamma;
  j["c0"] = b.c0;
  j["c1"] = b.c1;
  j["c2"] = b.c2;
  j["c3"] = b.c3;
  j["eps"] = b.eps;
  j["r_inner"] = b.r_inner;
  j["r_outer"] = b.r_outer;
  j["n"] = b.n;
  j["p_min"] = P.p_min();
  j["p_max"] = P.p_max();
  j["grad_p_lipschitz"] = P.lipschitz();
  j["theta"] = P.theta();
  return j.dump();
}

}  // namespace

CertificationReport certify_barrier_w(const Barrier& b, const ExponentField& P,
                                      int samples_per_axis,
                                      std::optional<double> threshold_override) {
  require(b.kind == BarrierKind::radial_w, ErrorKind::validation,
          "certify_barrier_w expects a radial_w barrier");
  b.validate();
  std::vector<Vec> pts = annulus_samples(b, samples_per_axis);
  const double threshold =
      threshold_override.value_or(certification_floor(b.c1, P.p_min(), P.p_max()));

  std::vector<double> margins;
  std::int64_t worst = par::argmin(
      static_cast<std::int64_t>(pts.size()),
      [&](std::int64_t i) {
        return eval_barrier(b, pts[static_cast<size_t>(i)], P).p_laplacian - threshold;
      },
      &margins);

  CertificationReport rep;
  rep.inequality = "radial_profile_lower_bound";
  rep.min_margin = margins[static_cast<size_t>(worst)];
  rep.pass = rep.min_margin > 0;
  rep.worst_point = pts[static_cast<size_t>(worst)];
  rep.sample_count = static_cast<std::int64_t>(pts.size());
  rep.samples_per_axis = samples_per_axis;
  rep.threshold = threshold;
  rep.parameters = barrier_parameters_json(b, P);
  return rep;
}

CertificationReport certify_barrier_v(const Barrier& b, const ExponentField& P,
                                      int samples_per_axis) {
  require(b.kind == BarrierKind::perturbed_v, ErrorKind::validation,
          "certify_barrier_v expects a perturbed_v barrier");
  b.validate();
  std::vector<Vec> pts = annulus_samples(b, samples_per_axis);
  const double sign_threshold = b.eps * b.eps;

  std::vector<double> margins;
  std::int64_t worst = par::argmin(
      static_cast<std::int64_t>(pts.size()),
      [&](std::int64_t i) {
        BarrierEval e = eval_barrier(b, pts[static_cast<size_t>(i)], P);
        double gn = norm(e.gradient);
        double pinch = std::min(gn - 0.5, 2.0 - gn);
        double sign = e.p_laplacian - sign_threshold;
        return std::min(pinch, sign);
      },
      &margins);

  CertificationReport rep;
  rep.inequality = "perturbed_plane_gradient_pinch_and_sign";
  rep.min_margin = margins[static_cast<size_t>(worst)];
  rep.pass = rep.min_margin > 0;
  rep.worst_point = pts[static_cast<size_t>(worst)];
  rep.sample_count = static_cast<std::int64_t>(pts.size());
  rep.samples_per_axis = samples_per_axis;
  rep.threshold = sign_threshold;
  rep.parameters = barrier_parameters_json(b, P);
  return rep;
}

BarrierConstants barrier_constants(int n, double p_min, double p_max, double c0,
                                   double c1, double theta, double r_inner,
                                   double r_outer, int samples_per_axis) {
  BarrierConstants out;
  out.gamma = gamma_exponent(n, p_min, p_max);
  out.c_floor = certification_floor(c1, p_min, p_max);
  out.note =
      "eps thresholds are empirical: largest eps on the grid 2^-1..2^-30 such "
      "that it and every smaller grid value certify";

  const double extent = r_outer;  // synthetic fields are centered at the origin
  auto exponent_for = [&](double eps) {
    double g = std::pow(eps, 1.0 + theta);
    if (p_max - p_min < 2.0 * g * extent)
      g = p_max > p_min ? 0.5 * (p_max - p_min) / extent : 0.0;
    if (g == 0.0) return ExponentField::constant(n, 0.5 * (p_min + p_max));
    return ExponentField::synthetic_flat(n, p_min, p_max, g, extent);
  };

  auto sweep = [&](const std::function<bool(double, const ExponentField&)>& pass_at) {
    // largest grid eps such that it and all smaller grid values pass: walk
    // upward from 2^-30 and stop extending once any value fails
    double threshold = 0.0;
    bool chain_intact = true;
    for (int k = 30; k >= 1 && chain_intact; --k) {
      double eps = std::ldexp(1.0, -k);
      if (pass_at(eps, exponent_for(eps)))
        threshold = eps;
      else
        chain_intact = false;
    }
    return threshold;
  };

  Vec center = Vec::zero(n);
  out.eps0_empirical = sweep([&](double eps, const ExponentField& P) {
    (void)eps;
    Barrier w = Barrier::radial(n, p_min, p_max, center, c1, 0.0, r_inner, r_outer);
    return certify_barrier_w(w, P, samples_per_axis).pass;
  });
  out.eps1_empirical = sweep([&](double eps, const ExponentField& P) {
    Barrier v = Barrier::perturbed(n, p_min, p_max, center, c0, c1, 0.0, r_inner,
                                   r_outer, eps);
    return certify_barrier_v(v, P, samples_per_axis).pass;
  });
  return out;
}

ComparisonReport classify_comparison(const SmoothField& v, const ExponentField& P,
                                     const std::function<double(const Vec&)>& f,
                                     const std::function<double(const Vec&)>& g,
                                     const Box& region, int samples_per_axis) {
  require(samples_per_axis >= 2, ErrorKind::validation,
          "need at least 2 samples per axis");
  Index shape{};
  for (int d = 0; d < region.dim(); ++d)
    shape[static_cast<size_t>(d)] = samples_per_axis;
  GridFunction vg(region, shape);
  vg.sample(v.value);
  PositivePhase phase = extract_positive_phase(vg);

  ComparisonReport rep;
  const double inf = std::numeric_limits<double>::infinity();
  rep.interior_margin = inf;
  rep.interior_margin_super = inf;
  rep.boundary_margin = inf;
  rep.boundary_margin_super = inf;

  for_each_node(vg, [&](std::int64_t flat, const Index&, const Vec& x) {
    if (!phase.positive(flat)) return;
    ++rep.positive_samples;
    Vec gradient = v.gradient(x);
    require(norm(gradient) >= kGradientFloor, ErrorKind::gradient_degenerate,
            "comparison candidate has a degenerate gradient on its positive phase");
    double lap = p_laplacian_from_derivatives(gradient, v.hessian(x), P(x), P.grad(x));
    double fx = f(x);
    rep.interior_margin = std::min(rep.interior_margin, lap - fx);
    rep.interior_margin_super = std::min(rep.interior_margin_super, fx - lap);
  });

  for (const auto& fb : phase.boundary) {
    ++rep.boundary_samples;
    Vec gradient = v.gradient(fb.x);
    double gn = norm(gradient);
    require(gn >= kGradientFloor, ErrorKind::gradient_degenerate,
            "comparison candidate has a degenerate gradient on its free boundary");
    double gx = g(fb.x);
    rep.boundary_margin = std::min(rep.boundary_margin, gn - gx);
    rep.boundary_margin_super = std::min(rep.boundary_margin_super, gx - gn);
  }

  if (rep.positive_samples == 0) {
    rep.verdict = ComparisonClass::neither;
    return rep;
  }
  if (rep.interior_margin > 0 && rep.boundary_margin > 0)
    rep.verdict = ComparisonClass::strict_sub;
  else if (rep.interior_margin_super > 0 && rep.boundary_margin_super > 0)
    rep.verdict = ComparisonClass::strict_super;
  else
    rep.verdict = ComparisonClass::neither;
  return rep;
}

}  // namespace pxfb
