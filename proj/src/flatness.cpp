#include "pxfb/flatness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "pxfb/parallel.hpp"

namespace pxfb {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_ball_inside(const GridFunction& u, const Vec& center, double r,
                         const char* what) {
  for (int d = 0; d < u.dim(); ++d) {
    bool ok = center[d] - r >= u.box().lo[d] - 1e-12 &&
              center[d] + r <= u.box().hi[d] + 1e-12;
    require(ok, ErrorKind::validation,
            std::string(what) + ": ball of radius " + format_double(r) +
                " exits the grid box");
  }
}

std::vector<double> vec_to_std(const Vec& v) {
  return std::vector<double>(v.a.begin(), v.a.begin() + v.n);
}

// least squares of y on x; returns (slope, intercept, rms residual)
struct LineFit {
  double slope = 0, intercept = 0, rms = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const size_t m = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < m; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double denom = m * sxx - sx * sx;
  if (std::fabs(denom) < 1e-30) return f;
  f.slope = (m * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / m;
  double ss = 0;
  for (size_t i = 0; i < m; ++i) {
    double r = y[i] - f.intercept - f.slope * x[i];
    ss += r * r;
  }
  f.rms = std::sqrt(ss / m);
  return f;
}

}  // namespace

std::string FlatnessCertificate::to_json_string() const {
  nlohmann::ordered_json j;
  j["center"] = vec_to_std(center);
  j["radius"] = radius;
  j["direction"] = vec_to_std(direction);
  j["lower"] = lower;
  j["upper"] = upper;
  j["eps"] = eps;
  j["scale_index"] = scale_index;
  j["node_count"] = node_count;
  return j.dump(2);
}

FlatnessCertificate measure_flatness(const GridFunction& u, const Vec& center,
                                     double radius, const Vec& direction) {
  require(radius > 0, ErrorKind::validation, "flatness radius must be positive");
  require(center.dim() == u.dim() && direction.dim() == u.dim(),
          ErrorKind::validation, "flatness direction/center dimension mismatch");
  require(norm(direction) > 0, ErrorKind::validation,
          "flatness direction must be nonzero");
  require_ball_inside(u, center, radius, "measure_flatness");
  Vec nu = normalized(direction);

  FlatnessCertificate cert;
  cert.center = center;
  cert.radius = radius;
  cert.direction = nu;

  double a = std::numeric_limits<double>::infinity();
  double b = -std::numeric_limits<double>::infinity();
  std::int64_t count = 0;
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    Vec d = x - center;
    if (norm(d) > radius + 1e-12) return;
    double val = u.at(flat);
    require(val >= -1e-12, ErrorKind::validation,
            "flatness scan requires a nonnegative field");
    double s = dot(d, nu);
    ++count;
    a = std::min(a, val - s);        // (s + a)^+ <= u needs a <= u - s (u >= 0)
    if (val > 0) b = std::max(b, val - s);  // only positive nodes constrain b
  });
  require(count > 0, ErrorKind::validation, "flatness ball contains no node");

  if (!std::isfinite(b)) b = a;  // no positive nodes: degenerate zero-width slab
  cert.lower = a;
  cert.upper = b;
  cert.eps = (b - a) / radius;
  cert.node_count = count;
  return cert;
}

double certificate_violation(const GridFunction& u,
                             const FlatnessCertificate& cert) {
  double worst = 0;
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    Vec d = x - cert.center;
    if (norm(d) > cert.radius + 1e-12) return;
    double s = dot(d, cert.direction);
    double val = u.at(flat);
    worst = std::max(worst, std::max(s + cert.lower, 0.0) - val);
    if (val > 0) worst = std::max(worst, val - std::max(s + cert.upper, 0.0));
  });
  return std::max(worst, 0.0);
}

namespace {

// Orthonormal tangent basis at nu (Gram-Schmidt over coordinate axes).
std::vector<Vec> tangent_basis(const Vec& nu) {
  std::vector<Vec> basis;
  for (int d = 0; d < nu.dim() && static_cast<int>(basis.size()) < nu.dim() - 1;
       ++d) {
    Vec t = Vec::axis(nu.dim(), d);
    t = t - dot(t, nu) * nu;
    for (const Vec& b : basis) t = t - dot(t, b) * b;
    double len = norm(t);
    if (len < 1e-8) continue;
    basis.push_back((1.0 / len) * t);
  }
  require(static_cast<int>(basis.size()) == nu.dim() - 1, ErrorKind::validation,
          "tangent basis construction failed");
  return basis;
}

Vec cap_direction(const Vec& nu, const std::vector<Vec>& basis,
                  const std::vector<double>& w) {
  double len = 0;
  for (double wi : w) len += wi * wi;
  len = std::sqrt(len);
  if (len < 1e-15) return nu;
  Vec t(nu.dim());
  for (size_t i = 0; i < w.size(); ++i) t = t + (w[i] / len) * basis[i];
  return std::cos(len) * nu + std::sin(len) * t;
}

}  // namespace

FlatnessCertificate best_direction(const GridFunction& u, const Vec& center,
                                   double radius, const Vec& seed) {
  require(norm(seed) > 0, ErrorKind::validation, "seed direction must be nonzero");
  require_ball_inside(u, center, radius, "best_direction");
  Vec nu0 = normalized(seed);
  std::vector<Vec> basis = tangent_basis(nu0);
  const int m = static_cast<int>(basis.size());

  // ball nodes cached once; per-candidate scan only recomputes projections
  std::vector<std::int64_t> nodes;
  std::vector<Vec> offsets;
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    Vec d = x - center;
    if (norm(d) > radius + 1e-12) return;
    require(u.at(flat) >= -1e-12, ErrorKind::validation,
            "flatness scan requires a nonnegative field");
    nodes.push_back(flat);
    offsets.push_back(d);
  });
  require(!nodes.empty(), ErrorKind::validation, "flatness ball contains no node");

  auto eps_of = [&](const Vec& nu) {
    double a = std::numeric_limits<double>::infinity();
    double b = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nodes.size(); ++i) {
      double val = u.at(nodes[i]);
      double s = dot(offsets[i], nu);
      a = std::min(a, val - s);
      if (val > 0) b = std::max(b, val - s);
    }
    if (!std::isfinite(b)) b = a;
    return (b - a) / radius;
  };

  // Geodesic cap grid at 0.25 degree resolution (one tangent axis per extra
  // dimension), refined locally twice at 5x. The cap halves beyond 2D to keep
  // the candidate count workable; the seed is always candidate 0 of the
  // enumeration, and ties resolve to the smallest candidate index.
  double step = 0.25 * kPi / 180.0;
  double cap = (m == 1 ? 15.0 : 3.75) * kPi / 180.0;
  Vec best_nu = nu0;

  for (int stage = 0; stage < 3; ++stage) {
    int half = static_cast<int>(std::round(cap / step));
    int per_axis = 2 * half + 1;
    std::int64_t total = 1;
    for (int i = 0; i < m; ++i) total *= per_axis;
    Vec origin = best_nu;

    std::vector<Vec> cands;
    cands.reserve(static_cast<size_t>(total) + 1);
    cands.push_back(origin);  // exact seed/center first: wins ties
    for (std::int64_t c = 0; c < total; ++c) {
      std::int64_t rem = c;
      std::vector<double> w(static_cast<size_t>(m));
      bool center_pt = true;
      for (int i = 0; i < m; ++i) {
        int ki = static_cast<int>(rem % per_axis) - half;
        rem /= per_axis;
        w[static_cast<size_t>(i)] = ki * step;
        if (ki != 0) center_pt = false;
      }
      if (center_pt) continue;  // already present as candidate 0
      cands.push_back(cap_direction(origin, basis, w));
    }

    std::int64_t win = par::argmin(
        static_cast<std::int64_t>(cands.size()),
        [&](std::int64_t i) { return eps_of(cands[static_cast<size_t>(i)]); });
    best_nu = cands[static_cast<size_t>(win)];
    cap = step;      // refine around the winner
    step = step / 5.0;
  }

  return measure_flatness(u, center, radius, best_nu);
}

HarnackRatio harnack_ratio(const GridFunction& v, const GridFunction& f,
                           const ExponentField& P, const Vec& center, double R) {
  GridFunction::require_compatible(v, f, "harnack_ratio");
  require(R > 0, ErrorKind::validation, "Harnack radius must be positive");
  require_ball_inside(v, center, 4.0 * R, "harnack_ratio");

  HarnackRatio out;
  double sup = -std::numeric_limits<double>::infinity();
  double inf = std::numeric_limits<double>::infinity();
  double f_sup = 0;
  std::int64_t count = 0;
  for_each_node(v, [&](std::int64_t flat, const Index&, const Vec& x) {
    double dist = norm(x - center);
    if (dist > 4.0 * R + 1e-12) return;
    require(v.at(flat) >= -1e-10, ErrorKind::validation,
            "Harnack ratio requires a nonnegative field on the large ball");
    f_sup = std::max(f_sup, std::fabs(f.at(flat)));
    if (dist > R + 1e-12) return;
    ++count;
    sup = std::max(sup, v.at(flat));
    inf = std::min(inf, v.at(flat));
  });
  require(count > 0, ErrorKind::validation, "Harnack ball contains no node");

  out.sup = sup;
  out.inf = inf;
  out.f_term = std::pow(f_sup, 1.0 / (P.p_max() - 1.0));
  if (sup <= 0) return out;  // degenerate: C_emp = 0 sentinel

  // positive root of R C^2 + (inf + R f_term) C - sup = 0
  double beta = inf + R * out.f_term;
  out.c_emp = (-beta + std::sqrt(beta * beta + 4.0 * R * sup)) / (2.0 * R);
  return out;
}

DichotomyReport dichotomy_probe(const GridFunction& u, double sigma, double eps) {
  require(std::fabs(sigma) < 1.0 / 20.0, ErrorKind::validation,
          "dichotomy offset must satisfy |sigma| < 1/20");
  require(eps > 0, ErrorKind::validation, "dichotomy needs a positive eps");
  const int n = u.dim();
  Vec origin(n);
  require_ball_inside(u, origin, 1.0, "dichotomy_probe");

  auto q = [&](const Vec& x) { return x[n - 1] + sigma; };

  // hypothesis: q^+ <= u <= (q + eps)^+ on lattice B_1
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    if (norm(x) > 1.0 + 1e-12) return;
    double val = u.at(flat);
    double qx = q(x);
    require(val >= std::max(qx, 0.0) - 1e-12, ErrorKind::hypothesis_violated,
            "dichotomy hypothesis fails: u < q+ on the unit ball");
    require(val <= std::max(qx + eps, 0.0) + 1e-12, ErrorKind::hypothesis_violated,
            "dichotomy hypothesis fails: u > (q + eps)+ on the unit ball");
  });

  DichotomyReport rep;
  Vec x0 = Vec::axis(n, n - 1, 0.1);
  rep.probe_value = u.interpolate(x0);
  rep.probe_threshold = std::max(q(x0) + 0.5 * eps, 0.0);
  rep.branch = rep.probe_value >= rep.probe_threshold ? DichotomyBranch::upper
                                                      : DichotomyBranch::lower;

  double lift = std::numeric_limits<double>::infinity();
  double drop = std::numeric_limits<double>::infinity();
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    if (norm(x) > 0.5 + 1e-12) return;
    double w = (u.at(flat) - q(x)) / eps;
    lift = std::min(lift, w);
    if (u.at(flat) > 0) drop = std::min(drop, 1.0 - w);
  });
  rep.c_lift = std::clamp(std::isfinite(lift) ? lift : 1.0, 0.0, 1.0);
  rep.c_drop = std::clamp(std::isfinite(drop) ? drop : 1.0, 0.0, 1.0);
  rep.c = rep.c_lift;
  return rep;
}

HolderFit holder_modulus(const GridFunction& u, const Vec& direction,
                         const Vec& x0, double eps, double eps_bar,
                         bool restrict_to_phase) {
  require(eps > 0 && eps_bar > 0, ErrorKind::validation,
          "holder_modulus needs positive eps and eps_bar");
  require(u.box().contains(x0, 1e-12), ErrorKind::validation,
          "holder_modulus center outside the grid box");
  Vec nu = normalized(direction);
  const double cut = eps / eps_bar;

  double r_max = std::numeric_limits<double>::infinity();
  for (int d = 0; d < u.dim(); ++d) {
    r_max = std::min(r_max, x0[d] - u.box().lo[d]);
    r_max = std::min(r_max, u.box().hi[d] - x0[d]);
  }
  require(r_max > cut, ErrorKind::resolution_exhausted,
          "no sample radius above eps/eps_bar fits in the grid");

  auto in_phase_closure = [&](const Index& idx, double val) {
    if (!restrict_to_phase) return true;
    if (val > 0) return true;
    for (int d = 0; d < u.dim(); ++d) {
      for (int s = -1; s <= 1; s += 2) {
        Index nb = idx;
        nb[static_cast<size_t>(d)] += s;
        if (nb[static_cast<size_t>(d)] < 0 || nb[static_cast<size_t>(d)] >= u.shape(d))
          continue;
        if (u.at(nb) > 0) return true;
      }
    }
    return false;
  };

  double w0 = (u.interpolate(x0) - dot(x0, nu)) / eps;

  std::vector<double> log_r, log_osc;
  int annuli_with_nodes = 0;
  double peak = 0;
  for (int j = 0; j < 48; ++j) {
    double outer = std::ldexp(r_max, -j);
    if (outer < cut) break;
    double inner = 0.5 * outer;
    double osc = 0;
    bool any = false;
    for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec& x) {
      double dist = norm(x - x0);
      if (dist < inner || dist > outer || dist < cut) return;
      if (!in_phase_closure(idx, u.at(flat))) return;
      any = true;
      double w = (u.at(flat) - dot(x, nu)) / eps;
      osc = std::max(osc, std::fabs(w - w0));
    });
    if (!any) continue;
    ++annuli_with_nodes;
    peak = std::max(peak, osc);
    if (osc > 0) {
      log_r.push_back(std::log(outer));
      log_osc.push_back(std::log(osc));
    }
  }
  require(annuli_with_nodes > 0, ErrorKind::resolution_exhausted,
          "no admissible sample nodes beyond eps/eps_bar");

  HolderFit fit;
  fit.annuli_used = static_cast<int>(log_r.size());
  if (log_r.size() < 2) {
    fit.C_emp = peak;  // zero for constant w; single-annulus peak otherwise
    return fit;
  }
  LineFit line = fit_line(log_r, log_osc);
  fit.gamma_emp = line.slope;
  fit.C_emp = std::exp(line.intercept);
  fit.fit_residual = line.rms;
  fit.fitted = true;
  return fit;
}

// ---------------------------------------------------------------------------
// Improvement-of-flatness iteration
// ---------------------------------------------------------------------------

std::string IterationTrace::to_json_string() const {
  nlohmann::ordered_json j;
  j["rbar"] = rbar;
  j["alpha_hat"] = alpha_hat;
  j["alpha_fitted"] = alpha_fitted;
  j["mean_ratio"] = mean_ratio;
  j["ratio_available"] = ratio_available;
  j["recenter_shift"] = vec_to_std(recenter_shift);
  j["direction_chain_sum"] = direction_chain_sum;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const IterationScale& s : scales) {
    nlohmann::ordered_json e;
    e["k"] = s.k;
    e["rho"] = s.rho;
    e["eps"] = s.certificate.eps;
    e["lower"] = s.certificate.lower;
    e["upper"] = s.certificate.upper;
    e["direction"] = vec_to_std(s.certificate.direction);
    e["interp_floor"] = s.interp_floor;
    e["resolvable"] = s.resolvable;
    if (s.bounds) {
      nlohmann::ordered_json b;
      b["f_sup"] = s.bounds->f_sup;
      b["g_dev_sup"] = s.bounds->g_dev_sup;
      b["grad_p_sup"] = s.bounds->grad_p_sup;
      b["threshold"] = s.bounds->threshold;
      b["f_ok"] = s.bounds->f_ok;
      b["g_ok"] = s.bounds->g_ok;
      b["p_ok"] = s.bounds->p_ok;
      e["bounds"] = b;
    }
    arr.push_back(e);
  }
  j["scales"] = arr;
  return j.dump(2);
}

void IterationTrace::save_csv(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::io, "cannot open " + path + " for writing");
  int dim = scales.empty() ? 0 : scales.front().certificate.direction.dim();
  os << "k,rho,eps";
  for (int d = 0; d < dim; ++d) os << ",nu_" << d;
  os << ",alpha_running,interp_floor,resolvable\n";

  std::vector<double> lr, le;
  for (const IterationScale& s : scales) {
    double alpha_running = 0;
    if (s.resolvable && s.certificate.eps > 0) {
      lr.push_back(std::log(s.rho));
      le.push_back(std::log(s.certificate.eps));
    }
    if (lr.size() >= 2) alpha_running = fit_line(lr, le).slope;
    os << s.k << "," << format_double(s.rho) << ","
       << format_double(s.certificate.eps);
    for (int d = 0; d < dim; ++d)
      os << "," << format_double(s.certificate.direction[d]);
    os << "," << format_double(alpha_running) << ","
       << format_double(s.interp_floor) << "," << (s.resolvable ? 1 : 0) << "\n";
  }
}

IterationTrace flatness_iteration(const GridFunction& u, const IterationConfig& cfg) {
  require(cfg.rbar > 0 && cfg.rbar < 1, ErrorKind::validation,
          "scale ratio must lie in (0, 1)");
  require(cfg.max_scales >= 1, ErrorKind::validation, "need at least one scale");
  const int n = u.dim();

  IterationTrace trace;
  trace.rbar = cfg.rbar;
  trace.recenter_shift = Vec::zero(n);

  Vec center = Vec::zero(n);
  if (cfg.recenter) {
    PositivePhase phase = extract_positive_phase(u);
    require(!phase.boundary.empty(), ErrorKind::validation,
            "flatness iteration needs a nonempty free boundary");
    double best = std::numeric_limits<double>::infinity();
    for (const FreeBoundaryPoint& fb : phase.boundary) {
      double d = norm(fb.x);
      if (d < best - 1e-15) {
        best = d;
        center = fb.x;
      }
    }
    trace.recenter_shift = center;
  } else {
    PositivePhase phase = extract_positive_phase(u);
    require(!phase.boundary.empty(), ErrorKind::validation,
            "flatness iteration needs a nonempty free boundary");
    require(distance_to_free_boundary(phase, center) <= u.max_spacing() + 1e-12,
            ErrorKind::hypothesis_violated,
            "origin is not on the free boundary (within one spacing)");
  }

  Vec seed = cfg.seed_direction.dim() == n ? normalized(cfg.seed_direction)
                                           : Vec::axis(n, n - 1);
  const double h = u.max_spacing();

  Vec prev_dir = seed;
  for (int k = 0; k < cfg.max_scales; ++k) {
    double rho = std::pow(cfg.rbar, k);
    if (rho < 4.0 * h - 1e-15) {
      require(!cfg.error_on_exhaustion, ErrorKind::resolution_exhausted,
              "scale " + std::to_string(k) + " fell below four grid spacings");
      break;
    }

    // Flatness at scale rho is measured on the original lattice over
    // B_rho(center): measure_flatness already divides the slab width by the
    // ball radius, which is exactly the rescaled eps_k, and nodal values need
    // no interpolation (which would smear the free-boundary kink by O(h/rho)).
    IterationScale scale;
    scale.k = k;
    scale.rho = rho;
    scale.certificate = best_direction(u, center, rho, prev_dir);
    scale.certificate.scale_index = k;
    scale.interp_floor = (h / 4.0) / rho;
    scale.resolvable = scale.certificate.eps >= 2.0 * scale.interp_floor;

    if (cfg.f || cfg.g || cfg.P) {
      RescaleBoundRecord rec;
      double eps_k = cfg.eps0 * std::pow(0.5, k);
      rec.threshold = eps_k * eps_k;
      for_each_node(u, [&](std::int64_t, const Index&, const Vec& y) {
        if (norm(y - center) > rho + 1e-12) return;
        if (cfg.f) rec.f_sup = std::max(rec.f_sup, std::fabs(rho * cfg.f(y)));
        if (cfg.g)
          rec.g_dev_sup = std::max(rec.g_dev_sup, std::fabs(cfg.g(y) - 1.0));
        if (cfg.P)
          rec.grad_p_sup = std::max(rec.grad_p_sup, rho * norm(cfg.P->grad(y)));
      });
      rec.f_ok = !cfg.f || rec.f_sup <= rec.threshold + 1e-12;
      rec.g_ok = !cfg.g || rec.g_dev_sup <= rec.threshold + 1e-12;
      rec.p_ok = !cfg.P || rec.grad_p_sup <= rec.threshold + 1e-12;
      scale.bounds = rec;
    }

    if (!trace.scales.empty())
      trace.direction_chain_sum +=
          norm(scale.certificate.direction - trace.scales.back().certificate.direction);
    prev_dir = scale.certificate.direction;
    trace.scales.push_back(std::move(scale));
  }
  require(!trace.scales.empty(), ErrorKind::resolution_exhausted,
          "no scale satisfied the resolution guard rho >= 4h");

  std::vector<double> lr, le;
  for (const IterationScale& s : trace.scales) {
    if (s.resolvable && s.certificate.eps > 0) {
      lr.push_back(std::log(s.rho));
      le.push_back(std::log(s.certificate.eps));
    }
  }
  if (lr.size() >= 2) {
    trace.alpha_hat = fit_line(lr, le).slope;
    trace.alpha_fitted = true;
  }

  double log_sum = 0;
  int pairs = 0;
  for (size_t i = 0; i + 1 < trace.scales.size(); ++i) {
    const IterationScale& a = trace.scales[i];
    const IterationScale& b = trace.scales[i + 1];
    if (!a.resolvable || !b.resolvable) continue;
    if (!(a.certificate.eps > 0) || !(b.certificate.eps > 0)) continue;
    log_sum += std::log(b.certificate.eps / a.certificate.eps);
    ++pairs;
  }
  if (pairs > 0) {
    trace.mean_ratio = std::exp(log_sum / pairs);
    trace.ratio_available = true;
  }
  return trace;
}

}  // namespace pxfb
