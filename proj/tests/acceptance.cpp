// Acceptance gate for the toolkit. Each criterion prints exactly one
// [PASS]/[FAIL] line with its measured quantities and wall time; the process
// exit code is the number of failed criteria. Tolerances and runtime budgets
// are pinned in this file on purpose — they are the contract, not knobs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pxfb/barrier.hpp"
#include "pxfb/experiment.hpp"
#include "pxfb/exponent.hpp"
#include "pxfb/flatness.hpp"
#include "pxfb/grid.hpp"
#include "pxfb/operators.hpp"
#include "pxfb/solve.hpp"

using namespace pxfb;
namespace fs = std::filesystem;

namespace {

const char* kRunRoot = "acceptance_runs";

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

RunRecord run_cfg(const std::string& json_text) {
  ExperimentConfig cfg = config_from_json_text(json_text, "acceptance");
  return run_experiment(cfg, 7, std::string(kRunRoot));
}

double metric(const RunRecord& rec, const std::string& key) {
  auto it = rec.metrics.find(key);
  return it == rec.metrics.end() ? std::numeric_limits<double>::quiet_NaN()
                                 : it->second;
}

// ---------------------------------------------------------------------------
// 1. The barrier decay exponent: hand values, and the three defining
//    inequalities have nonnegative slack on random admissible triples.
// ---------------------------------------------------------------------------
bool crit_gamma(std::string& detail) {
  if (gamma_exponent(2, 2.0, 2.0) != 1.0 || gamma_exponent(3, 2.0, 2.0) != 2.0 ||
      gamma_exponent(2, 1.5, 3.0) != 4.0) {
    detail = "hand values mismatch: " + fmt(gamma_exponent(2, 2, 2)) + ", " +
             fmt(gamma_exponent(3, 2, 2)) + ", " + fmt(gamma_exponent(2, 1.5, 3));
    return false;
  }
  std::mt19937_64 rng(20260822);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double min_slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    int n = 2 + static_cast<int>(rng() % 3);
    double p_min = 1.05 + 1.95 * uni(rng);
    double p_max = p_min + 2.0 * uni(rng);
    double g = gamma_exponent(n, p_min, p_max);
    // the three inequalities the exponent must satisfy, written out directly
    double s1 = g * (p_min - 1.0) + p_min - n - 1.0;
    double s2 = (g + 2.0) * (p_min - 1.0) - n - 1.0;
    double s3 = g + 4.0 - n - p_max - 1.0;
    min_slack = std::min({min_slack, s1, s2, s3});
  }
  detail = "hand values exact, min slack over 100 triples = " + fmt(min_slack);
  return min_slack >= -1e-12;
}

// ---------------------------------------------------------------------------
// 2. Analytic radial barrier against the closed-form value of the operator
//    on random annulus points for each (p0, n) pair.
// ---------------------------------------------------------------------------
bool crit_radial_identity(std::string& detail) {
  std::mt19937_64 rng(7241);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0;
  for (double p0 : {1.5, 2.0, 3.0}) {
    for (int n : {2, 3}) {
      Barrier b = Barrier::radial(n, p0, p0, Vec::zero(n), 1.0, 0.5, 0.1, 1.0);
      ExponentField P = ExponentField::constant(n, p0);
      double g = b.gamma;
      double coeff = std::pow(g, p0 - 1.0) * (g * (p0 - 1.0) + p0 - n);
      for (int i = 0; i < 10000; ++i) {
        double r = 0.1 + 0.9 * uni(rng);
        Vec x(n);
        double len = 0;
        do {
          for (int d = 0; d < n; ++d) x[d] = gauss(rng);
          len = norm(x);
        } while (len < 1e-8);
        for (int d = 0; d < n; ++d) x[d] *= r / len;
        double got = eval_barrier(b, x, P).p_laplacian;
        double want = coeff * std::pow(r, -g * (p0 - 1.0) - p0);
        worst = std::max(worst, std::fabs(got - want) / std::fabs(want));
      }
    }
  }
  detail = "max rel err over 6x10^4 annulus points = " + fmt(worst);
  return worst <= 1e-10;
}

// ---------------------------------------------------------------------------
// 3. Barrier certification: the radial barrier passes with the documented
//    margin under a constant exponent, and the perturbed barrier passes for
//    every grid eps below the empirical threshold with the synthetic
//    near-flat exponent field tied to eps.
// ---------------------------------------------------------------------------
bool crit_barrier_certificates(std::string& detail) {
  Barrier w = Barrier::radial(2, 2.0, 2.0, Vec::zero(2), 1.0, 0.5, 0.1, 1.0);
  ExponentField P2 = ExponentField::constant(2, 2.0);
  CertificationReport wrep = certify_barrier_w(w, P2, 128);
  double floor = certification_floor(1.0, 2.0, 2.0);
  if (!wrep.pass || wrep.threshold != floor || wrep.min_margin < floor - 1e-9) {
    detail = "radial certificate: pass=" + std::to_string(wrep.pass) +
             " margin=" + fmt(wrep.min_margin) + " threshold=" + fmt(wrep.threshold);
    return false;
  }

  const int n = 2;
  const double p_min = 1.9, p_max = 2.1, theta = 1.0;
  const double r_inner = 0.1, r_outer = 1.0, extent = r_outer;
  BarrierConstants consts =
      barrier_constants(n, p_min, p_max, 1.0, 1.0, theta, r_inner, r_outer, 64);
  if (!(consts.eps1_empirical > 0)) {
    detail = "empirical perturbed-barrier threshold is zero";
    return false;
  }
  int k1 = static_cast<int>(std::lround(-std::log2(consts.eps1_empirical)));
  int checked = 0;
  for (int k = k1; k <= 30; ++k) {
    double eps = std::ldexp(1.0, -k);
    double gnorm = std::pow(eps, 1.0 + theta);
    if (p_max - p_min < 2.0 * gnorm * extent) gnorm = 0.5 * (p_max - p_min) / extent;
    ExponentField P = ExponentField::synthetic_flat(n, p_min, p_max, gnorm, extent);
    Barrier v = Barrier::perturbed(n, p_min, p_max, Vec::zero(n), 1.0, 1.0, 0.0,
                                   r_inner, r_outer, eps);
    CertificationReport rep = certify_barrier_v(v, P, 64);
    if (!rep.pass) {
      detail = "perturbed certificate failed at eps=2^-" + std::to_string(k) +
               " margin=" + fmt(rep.min_margin);
      return false;
    }
    ++checked;
  }
  detail = "radial margin " + fmt(wrep.min_margin) + " >= " + fmt(floor) +
           "; perturbed passes at all " + std::to_string(checked) +
           " grid eps from 2^-" + std::to_string(k1) + " down";
  return true;
}

// ---------------------------------------------------------------------------
// 4. Discrete divergence-form operator vs the nondivergence expansion on
//    smooth benchmarks with nondegenerate gradient, refined three times.
// ---------------------------------------------------------------------------
struct Bench {
  const char* name;
  SmoothField field;
};

bool crit_operator_consistency(std::string& detail) {
  ExponentField P =
      ExponentField::affine(1.6, 2.8, 2.2, Vec{0.3, -0.2}, Vec{0.5, 0.5});
  std::vector<Bench> benches;
  benches.push_back({"sine-ramp",
                     {[](const Vec& x) { return x[1] + 0.2 * std::sin(x[0]); },
                      [](const Vec& x) {
                        return Vec{0.2 * std::cos(x[0]), 1.0};
                      },
                      [](const Vec& x) {
                        Mat H(2);
                        H(0, 0) = -0.2 * std::sin(x[0]);
                        return H;
                      }}});
  benches.push_back({"exp-ramp",
                     {[](const Vec& x) { return std::exp(0.3 * x[0] + 0.4 * x[1]); },
                      [](const Vec& x) {
                        double e = std::exp(0.3 * x[0] + 0.4 * x[1]);
                        return Vec{0.3 * e, 0.4 * e};
                      },
                      [](const Vec& x) {
                        double e = std::exp(0.3 * x[0] + 0.4 * x[1]);
                        Mat H(2);
                        H(0, 0) = 0.09 * e;
                        H(0, 1) = H(1, 0) = 0.12 * e;
                        H(1, 1) = 0.16 * e;
                        return H;
                      }}});
  benches.push_back({"saddle",
                     {[](const Vec& x) {
                        return x[0] + 0.5 * (x[0] * x[0] - x[1] * x[1]);
                      },
                      [](const Vec& x) {
                        return Vec{1.0 + x[0], -x[1]};
                      },
                      [](const Vec&) {
                        Mat H(2);
                        H(0, 0) = 1.0;
                        H(1, 1) = -1.0;
                        return H;
                      }}});
  benches.push_back({"bilinear",
                     {[](const Vec& x) { return 2.0 * x[1] + 0.25 * x[0] * x[1]; },
                      [](const Vec& x) {
                        return Vec{0.25 * x[1], 2.0 + 0.25 * x[0]};
                      },
                      [](const Vec&) {
                        Mat H(2);
                        H(0, 1) = H(1, 0) = 0.25;
                        return H;
                      }}});
  benches.push_back({"cosine-ridge",
                     {[](const Vec& x) {
                        return 2.0 * x[1] + 0.3 * std::cos(3.141592653589793 * x[0]);
                      },
                      [](const Vec& x) {
                        const double pi = 3.141592653589793;
                        return Vec{-0.3 * pi * std::sin(pi * x[0]), 2.0};
                      },
                      [](const Vec& x) {
                        const double pi = 3.141592653589793;
                        Mat H(2);
                        H(0, 0) = -0.3 * pi * pi * std::cos(pi * x[0]);
                        return H;
                      }}});

  double worst_order = std::numeric_limits<double>::infinity();
  std::string worst_name;
  for (const Bench& b : benches) {
    std::vector<double> errs;
    for (int nodes : {65, 129, 257}) {
      GridFunction u(Box(Vec{0.0, 0.0}, Vec{1.0, 1.0}), Index{nodes, nodes, 0, 0});
      u.sample(b.field.value);
      GridFunction f = u;
      f.fill(0.0);
      GridFunction R = eval_p_laplacian_div(u, P, f);
      double sup = 0;
      for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec& x) {
        if (!u.is_interior(idx)) return;
        if (norm(b.field.gradient(x)) < 0.1) return;  // precondition guard
        double ref = p_laplacian_from_derivatives(b.field.gradient(x),
                                                  b.field.hessian(x), P(x),
                                                  P.grad(x));
        sup = std::max(sup, std::fabs(R.at(flat) - ref));
      });
      errs.push_back(sup);
    }
    bool shrinking = errs[0] > errs[1] && errs[1] > errs[2];
    double order = 0.5 * observed_order(errs[0], errs[2]);
    if (!shrinking) {
      detail = std::string(b.name) + ": errors not decreasing (" + fmt(errs[0]) +
               ", " + fmt(errs[1]) + ", " + fmt(errs[2]) + ")";
      return false;
    }
    if (order < worst_order) {
      worst_order = order;
      worst_name = b.name;
    }
  }
  detail = "min observed order over 5 benchmarks = " + fmt(worst_order) + " (" +
           worst_name + ")";
  return worst_order >= 1.0;
}

// ---------------------------------------------------------------------------
// 5. Solver oracles: 1D closed form, manufactured radial refinement order,
//    and the energy slab family interface/slope law.
// ---------------------------------------------------------------------------
bool crit_solver_oracles(std::string& detail) {
  RunRecord line = run_cfg(R"({"kind":"dirichlet_benchmark","params":{}})");
  double line_err = metric(line, "sup_error");
  if (!(line_err <= 1e-3)) {
    detail = "1D closed-form sup error " + fmt(line_err) + " > 1e-3";
    return false;
  }

  RunRecord r81 = run_cfg(
      R"({"kind":"dirichlet_benchmark","params":{"case":"radial","nodes":81}})");
  RunRecord r161 = run_cfg(
      R"({"kind":"dirichlet_benchmark","params":{"case":"radial","nodes":161}})");
  double e81 = metric(r81, "sup_error"), e161 = metric(r161, "sup_error");
  double order = observed_order(e81, e161);
  if (!(order >= 1.0)) {
    detail = "radial refinement order " + fmt(order) + " < 1 (errors " +
             fmt(e81) + " -> " + fmt(e161) + ")";
    return false;
  }

  double worst_iface = 0, worst_slope = 0;
  for (double a : {0.25, 0.5, 0.75}) {
    for (double q : {1.0, 2.0}) {
      std::ostringstream cfg;
      cfg << R"({"kind":"energy_benchmark","params":{"a":)" << a
          << R"(,"q_speed":)" << q << "}}";
      RunRecord rec = run_cfg(cfg.str());
      double h = metric(rec, "h");
      double iface = metric(rec, "interface_error");
      double slope = metric(rec, "slope_rel_error");
      worst_iface = std::max(worst_iface, iface / (2.0 * h));
      worst_slope = std::max(worst_slope, slope);
      if (!(iface <= 2.0 * h) || !(slope <= 0.05)) {
        detail = "slab a=" + fmt(a) + " Q=" + fmt(q) + ": interface err " +
                 fmt(iface) + " (2h=" + fmt(2.0 * h) + "), slope rel err " +
                 fmt(slope);
        return false;
      }
    }
  }
  detail = "1D err " + fmt(line_err) + "; radial order " + fmt(order) +
           "; slab worst iface/2h " + fmt(worst_iface) + ", worst slope " +
           fmt(worst_slope);
  return true;
}

// ---------------------------------------------------------------------------
// 6. Linearized half-space Neumann problem: polynomial data reproduced to
//    solver tolerance for each p0, and the quadratic-remainder constant is
//    finite and stable across the three radii.
// ---------------------------------------------------------------------------
bool crit_neumann(std::string& detail) {
  double worst = 0;
  for (double p0 : {1.5, 2.0, 3.0}) {
    std::ostringstream cfg;
    cfg << R"({"kind":"neumann_check","params":{"p0":)" << p0 << "}}";
    RunRecord rec = run_cfg(cfg.str());
    double err = metric(rec, "sup_error");
    worst = std::max(worst, err);
    if (!(err <= 1e-6)) {
      detail = "polynomial sup error " + fmt(err) + " > 1e-6 at p0=" + fmt(p0);
      return false;
    }
  }
  RunRecord rem = run_cfg(
      R"({"kind":"neumann_check","params":{"p0":3.0,"case":"generic","h":0.0078125}})");
  double c16 = metric(rem, "cbar_1_16"), c8 = metric(rem, "cbar_1_8"),
         c4 = metric(rem, "cbar_1_4");
  double stability = metric(rem, "stability_factor");
  bool finite = std::isfinite(c16) && std::isfinite(c8) && std::isfinite(c4) &&
                c16 > 0 && c8 > 0 && c4 > 0;
  detail = "polynomial worst err " + fmt(worst) + "; remainder constants (" +
           fmt(c16) + ", " + fmt(c8) + ", " + fmt(c4) + "), stability " +
           fmt(stability);
  return finite && stability <= 2.0;
}

// ---------------------------------------------------------------------------
// 7. Viscosity battery: random touching polynomials above/below the solved
//    benchmarks produce zero violations beyond the discretization allowance.
// ---------------------------------------------------------------------------
bool crit_viscosity_battery(std::string& detail) {
  std::string cases[] = {"radial_p2", "radial_p3", "one_dimensional_p3"};
  std::string summary;
  for (const std::string& c : cases) {
    RunRecord rec = run_cfg(
        R"({"kind":"viscosity_battery","params":{"case":")" + c +
        R"(","tests":1000}})");
    double viol = metric(rec, "violations");
    if (viol != 0 || !rec.certification_pass) {
      detail = c + ": " + fmt(viol) + " violations";
      return false;
    }
    summary += (summary.empty() ? "" : ", ") + c + " 0/" +
               fmt(metric(rec, "tests"));
  }
  detail = "violations " + summary;
  return true;
}

// ---------------------------------------------------------------------------
// 8. Interior Harnack-style constant: finite, and stable within a factor of
//    two across grid refinement for each forcing size.
// ---------------------------------------------------------------------------
bool crit_harnack(std::string& detail) {
  std::string parts;
  for (double eps : {0.1, 0.01}) {
    std::map<int, double> c;
    for (int nodes : {129, 257}) {
      std::ostringstream cfg;
      cfg << R"({"kind":"harnack_study","params":{"eps":)" << eps
          << R"(,"nodes":)" << nodes << "}}";
      RunRecord rec = run_cfg(cfg.str());
      double v = metric(rec, "c_emp");
      if (!std::isfinite(v) || v <= 0 || !rec.certification_pass) {
        detail = "c_emp not finite/positive at eps=" + fmt(eps) +
                 " nodes=" + std::to_string(nodes);
        return false;
      }
      c[nodes] = v;
    }
    double ratio = c[129] / c[257];
    if (!(ratio >= 0.5 && ratio <= 2.0)) {
      detail = "refinement ratio " + fmt(ratio) + " outside [0.5, 2] at eps=" +
               fmt(eps);
      return false;
    }
    parts += (parts.empty() ? "" : "; ") + ("eps=" + fmt(eps)) + ": c=" +
             fmt(c[129]) + "/" + fmt(c[257]);
  }
  detail = parts;
  return true;
}

// ---------------------------------------------------------------------------
// 9. Flatness iteration: exact trace on a cone, curvature-driven decay rate
//    on a parabola, and contraction on an energy-minimizer input.
// ---------------------------------------------------------------------------
bool crit_flatness(std::string& detail) {
  const int nodes = 1281;  // h = 1/512 on [-1.25, 1.25]^2
  Box box(Vec{-1.25, -1.25}, Vec{1.25, 1.25});
  static ExponentField P2 = ExponentField::constant(2, 2.0);
  IterationConfig icfg;
  icfg.rbar = 0.5;
  icfg.max_scales = 6;
  icfg.eps0 = 0.5;
  icfg.seed_direction = Vec::axis(2, 1);
  icfg.f = [](const Vec&) { return 0.0; };
  icfg.g = [](const Vec&) { return 1.0; };
  icfg.P = &P2;

  GridFunction cone(box, Index{nodes, nodes, 0, 0});
  cone.sample([](const Vec& x) { return std::max(x[1], 0.0); });
  IterationTrace ct = flatness_iteration(cone, icfg);
  if (ct.scales.size() < 5) {
    detail = "cone trace has only " + std::to_string(ct.scales.size()) + " scales";
    return false;
  }
  for (const IterationScale& s : ct.scales) {
    bool exact = s.certificate.eps == 0.0 && s.certificate.direction[0] == 0.0 &&
                 s.certificate.direction[1] == 1.0;
    if (!exact) {
      detail = "cone scale k=" + std::to_string(s.k) + ": eps=" +
               fmt(s.certificate.eps) + " not exactly flat";
      return false;
    }
  }

  GridFunction par(box, Index{nodes, nodes, 0, 0});
  par.sample([](const Vec& x) {
    return std::max(x[1] + 0.1 * x[0] * x[0], 0.0);
  });
  IterationTrace pt = flatness_iteration(par, icfg);
  int resolvable = 0;
  for (const IterationScale& s : pt.scales)
    if (s.resolvable) ++resolvable;
  if (pt.scales.size() < 5 || resolvable < 2 || !pt.alpha_fitted ||
      pt.alpha_hat < 0.8 || pt.alpha_hat > 1.2) {
    detail = "parabola: scales=" + std::to_string(pt.scales.size()) +
             " resolvable=" + std::to_string(resolvable) + " alpha_hat=" +
             fmt(pt.alpha_hat);
    return false;
  }

  RunRecord mrec = run_cfg(
      R"({"kind":"flatness_iteration","params":{"case":"minimizer","nodes":257}})");
  double mean_ratio = metric(mrec, "mean_ratio");
  bool avail = metric(mrec, "ratio_available") == 1.0;
  detail = "cone exact over " + std::to_string(ct.scales.size()) +
           " scales; parabola alpha_hat " + fmt(pt.alpha_hat) + " (" +
           std::to_string(resolvable) + " resolvable); minimizer mean ratio " +
           fmt(mean_ratio);
  return avail && mean_ratio <= 0.95;
}

// ---------------------------------------------------------------------------
// 10. Variable-exponent norm suite: unit-modular bracketing and the scaling
//     identity on random fields.
// ---------------------------------------------------------------------------
bool crit_norms(std::string& detail) {
  RunRecord rec = run_cfg(R"({"kind":"norm_suite","params":{"count":1000}})");
  double fails = metric(rec, "bracket_failures");
  double hom = metric(rec, "hom_max_residual");
  detail = "bracket failures " + fmt(fails) + "/1000, homogeneity residual " +
           fmt(hom);
  return fails == 0 && hom <= 1e-9;
}

// ---------------------------------------------------------------------------
// 11. Determinism: identical config and seed reproduce every CSV/JSON
//     artifact byte for byte.
// ---------------------------------------------------------------------------
bool crit_determinism(std::string& detail) {
  std::string cfgs[] = {
      R"({"kind":"norm_suite","params":{"count":200,"nodes":9}})",
      R"({"kind":"viscosity_battery","params":{"case":"one_dimensional_p3","tests":100,"nodes":65}})",
      R"({"kind":"neumann_check","params":{"p0":2.0}})",
  };
  int files = 0;
  for (const std::string& cfg : cfgs) {
    RunRecord first = run_cfg(cfg);
    std::map<std::string, std::string> snapshot;
    std::vector<std::string> names = first.artifacts;
    names.push_back("record.json");
    for (const std::string& name : names) {
      std::ifstream is(fs::path(first.run_dir) / name, std::ios::binary);
      std::ostringstream ss;
      ss << is.rdbuf();
      snapshot[name] = ss.str();
    }
    RunRecord second = run_cfg(cfg);
    if (second.run_dir != first.run_dir) {
      detail = "rerun landed in a different directory: " + second.run_dir;
      return false;
    }
    for (const auto& [name, bytes] : snapshot) {
      std::ifstream is(fs::path(second.run_dir) / name, std::ios::binary);
      std::ostringstream ss;
      ss << is.rdbuf();
      if (ss.str() != bytes) {
        detail = name + " differs between identical runs (" + first.run_dir + ")";
        return false;
      }
      ++files;
    }
  }
  detail = std::to_string(files) + " artifacts byte-identical across reruns";
  return true;
}

}  // namespace

int main() {
  std::error_code ec;
  fs::remove_all(kRunRoot, ec);  // fresh tree; directory names are config hashes

  struct Criterion {
    const char* name;
    double budget_seconds;  // 0 = unbudgeted
    bool (*run)(std::string&);
  };
  const Criterion criteria[] = {
      {"gamma-exponent", 1.0, crit_gamma},
      {"radial-identity", 5.0, crit_radial_identity},
      {"barrier-certificates", 30.0, crit_barrier_certificates},
      {"operator-consistency", 60.0, crit_operator_consistency},
      {"solver-oracles", 300.0, crit_solver_oracles},
      {"neumann-linearization", 120.0, crit_neumann},
      {"viscosity-battery", 180.0, crit_viscosity_battery},
      {"harnack-constant", 300.0, crit_harnack},
      {"flatness-iteration", 600.0, crit_flatness},
      {"luxemburg-norms", 30.0, crit_norms},
      {"determinism", 0.0, crit_determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
      ok = false;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                      .count();
    bool in_budget = c.budget_seconds <= 0 || secs <= c.budget_seconds;
    if (ok && !in_budget)
      detail += " [exceeded " + fmt(c.budget_seconds) + "s budget]";
    bool pass = ok && in_budget;
    if (!pass) ++failed;
    std::printf("[%s] %-22s %8.2fs  %s\n", pass ? "PASS" : "FAIL", c.name, secs,
                detail.c_str());
    std::fflush(stdout);
  }
  int total = static_cast<int>(sizeof(criteria) / sizeof(criteria[0]));
  std::printf("%d/%d acceptance criteria passed\n", total - failed, total);
  return failed;
}
