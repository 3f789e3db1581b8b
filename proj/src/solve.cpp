#include "pxfb/solve.hpp"

#include <algorithm>
#include <fstream>

namespace pxfb {

void ConvergenceHistory::save_csv(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::io, "cannot open " + path + " for writing");
  os << "iteration,residual,energy\n";
  for (const auto& e : entries)
    os << e.iteration << "," << format_double(e.residual) << ","
       << format_double(e.energy) << "\n";
}

namespace {

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

double auto_relaxation(const GridFunction& u, bool linear_like) {
  // Poisson-optimal SOR estimate from the largest spacing-to-extent ratio.
  // Undershooting the optimum is far costlier than overshooting (real-root
  // stagnation vs. rho = omega - 1), so the estimate is used as-is and the
  // divergence safeguard below shrinks it if sweeps stop contracting.
  (void)linear_like;
  double h_rel = 0;
  for (int d = 0; d < u.dim(); ++d)
    h_rel = std::max(h_rel, u.spacing(d) / u.box().extent(d));
  double omega = 2.0 / (1.0 + std::sin(3.14159265358979323846 * h_rel));
  return std::min(omega, 1.99);
}

bool can_coarsen(const GridFunction& u) {
  for (int d = 0; d < u.dim(); ++d) {
    int cells = u.shape(d) - 1;
    if (cells % 2 != 0 || cells < 8) return false;
  }
  return true;
}

GridFunction restrict_injection(const GridFunction& fine) {
  Index shape{};
  for (int d = 0; d < fine.dim(); ++d)
    shape[static_cast<size_t>(d)] = (fine.shape(d) - 1) / 2 + 1;
  GridFunction coarse(fine.box(), shape);
  for_each_node(coarse, [&](std::int64_t flat, const Index& idx, const Vec&) {
    Index f{};
    for (int d = 0; d < fine.dim(); ++d)
      f[static_cast<size_t>(d)] = 2 * idx[static_cast<size_t>(d)];
    coarse.at(flat) = fine.at(f);
  });
  return coarse;
}

void prolong_into(const GridFunction& coarse, GridFunction& fine) {
  for_each_node(fine, [&](std::int64_t flat, const Index&, const Vec& x) {
    fine.at(flat) = coarse.interpolate(x);
  });
}

// Face data for one scalar node update. Only the normal slope depends on the
// node value; tangential contributions and the face exponent are frozen.
struct NodeFace {
  double nb = 0;       // neighbor value across the face
  double tang_sq = 0;  // shifted tangential magnitude squared + delta^2
  double p = 2;        // face exponent
  double inv_h = 0;
  double shift_d = 0;  // normal component of the shift vector
  double sign = 1;     // +1 upper face, -1 lower face
};

struct GaussSeidel {
  const GridFunction* f = nullptr;
  GridFunction* u = nullptr;
  std::vector<double> p_nodes;
  Vec shift;
  double delta = kDefaultFluxDelta;
  bool p2_fast = false;  // constant exponent 2: flux is linear in the slope

  void bind(const ExponentField& P, GridFunction& u_, const GridFunction& f_) {
    u = &u_;
    f = &f_;
    p_nodes = sample_exponent(u_, P);
    p2_fast = P.is_constant() && std::fabs(P.p0() - 2.0) < 1e-15;
  }

  // Collects the 2n faces around idx. s_k(t) = sign*(nb - t)*inv_h + shift_d.
  int collect_faces(const Index& idx, std::array<NodeFace, 2 * kMaxDim>& faces) const {
    const int n = u->dim();
    int count = 0;
    for (int d = 0; d < n; ++d) {
      for (int side = 0; side < 2; ++side) {
        Index a = idx;  // lower endpoint of the face
        if (side == 1) a[static_cast<size_t>(d)] -= 1;
        Index b = a;
        b[static_cast<size_t>(d)] += 1;
        NodeFace fc;
        fc.sign = side == 0 ? 1.0 : -1.0;
        fc.inv_h = 1.0 / u->spacing(d);
        fc.shift_d = shift.n ? shift[d] : 0.0;
        fc.nb = side == 0 ? u->at(b) : u->at(a);
        fc.p = 0.5 * (p_nodes[static_cast<size_t>(u->flatten(a))] +
                      p_nodes[static_cast<size_t>(u->flatten(b))]);
        double tang = delta * delta;
        for (int t = 0; t < n; ++t) {
          if (t == d) continue;
          double acc = 0;
          for (const Index& e : {a, b}) {
            Index ep = e, em = e;
            ep[static_cast<size_t>(t)] += 1;
            em[static_cast<size_t>(t)] -= 1;
            acc += (u->at(ep) - u->at(em)) * 0.5 / u->spacing(t);
          }
          double gt = 0.5 * acc + (shift.n ? shift[t] : 0.0);
          tang += gt * gt;
        }
        fc.tang_sq = tang;
        faces[static_cast<size_t>(count++)] = fc;
      }
    }
    return count;
  }

  // Residual R(t) = sum sign * flux / h - f and its t-derivative (< 0).
  static void residual_and_slope(const std::array<NodeFace, 2 * kMaxDim>& faces,
                                 int count, double t, double f_val, bool p2,
                                 double& R, double& dR) {
    R = -f_val;
    dR = 0;
    for (int k = 0; k < count; ++k) {
      const NodeFace& fc = faces[static_cast<size_t>(k)];
      double s = fc.sign * (fc.nb - t) * fc.inv_h + fc.shift_d;
      if (p2) {
        R += fc.sign * s * fc.inv_h;
        dR -= fc.inv_h * fc.inv_h;
        continue;
      }
      double M = s * s + fc.tang_sq;
      // M^{(p-4)/2}; p = 3 and p = 4 reduce to sqrt, dodging pow entirely
      double Mp;
      if (fc.p == 3.0)
        Mp = 1.0 / std::sqrt(M);
      else if (fc.p == 4.0)
        Mp = 1.0;
      else
        Mp = std::pow(M, 0.5 * (fc.p - 4.0));
      double flux = Mp * M * s;  // M^{(p-2)/2} s
      R += fc.sign * flux * fc.inv_h;
      dR -= fc.inv_h * fc.inv_h * Mp * (M + (fc.p - 2.0) * s * s);
    }
  }

  double residual_at(const Index& idx) const {
    std::array<NodeFace, 2 * kMaxDim> faces;
    int count = collect_faces(idx, faces);
    double R, dR;
    residual_and_slope(faces, count, u->at(idx), f->at(idx), p2_fast, R, dR);
    return R;
  }

  // Scalar Newton with a safeguarded expanding-bracket bisection. R is
  // strictly decreasing in t, so the root is unique.
  double solve_node(const Index& idx) const {
    std::array<NodeFace, 2 * kMaxDim> faces;
    int count = collect_faces(idx, faces);
    const double f_val = f->at(idx);
    double t = u->at(idx);
    double R, dR;
    residual_and_slope(faces, count, t, f_val, p2_fast, R, dR);
    if (p2_fast) return t - R / dR;  // exact: R is affine in t

    double lo = t, hi = t;  // bracket: R(lo) > 0 > R(hi) once expanded
    bool have_lo = false, have_hi = false;
    if (R > 0) {
      lo = t;
      have_lo = true;
    } else if (R < 0) {
      hi = t;
      have_hi = true;
    } else {
      return t;
    }

    double step = 0;
    for (int d = 0; d < u->dim(); ++d) step = std::max(step, u->spacing(d));
    step = std::max(step, 1e-6);

    for (int it = 0; it < 60; ++it) {
      if (std::fabs(R) < 1e-14 * (1.0 + std::fabs(f_val))) return t;
      double t_next;
      bool newton_ok = dR < 0;
      if (newton_ok) {
        t_next = t - R / dR;
        if (have_lo && have_hi && (t_next <= std::min(lo, hi) || t_next >= std::max(lo, hi)))
          newton_ok = false;
      }
      if (!newton_ok) {
        if (have_lo && have_hi) {
          t_next = 0.5 * (lo + hi);
        } else if (have_lo) {
          t_next = lo + step;
          step *= 2;
        } else {
          t_next = hi - step;
          step *= 2;
        }
      }
      t = t_next;
      residual_and_slope(faces, count, t, f_val, p2_fast, R, dR);
      if (R > 0) {
        lo = t;
        have_lo = true;
      } else if (R < 0) {
        hi = t;
        have_hi = true;
      } else {
        return t;
      }
      if (have_lo && have_hi && std::fabs(hi - lo) < 1e-15 * (1.0 + std::fabs(t)))
        return t;
    }
    return t;
  }
};

// Smooth part of the discrete energy (cell quadrature) plus the f·u nodal
// term; shared by solver histories and the minimizer.
double smooth_energy(const GridFunction& u, const std::vector<double>& p_cells,
                     const GridFunction& f, const Vec& shift, double delta) {
  const int n = u.dim();
  double cell_vol = 1;
  for (int d = 0; d < n; ++d) cell_vol *= u.spacing(d);
  const int corners = 1 << n;

  Index cells{};
  std::int64_t total = 1;
  for (int d = 0; d < n; ++d) {
    cells[static_cast<size_t>(d)] = u.shape(d) - 1;
    total *= cells[static_cast<size_t>(d)];
  }

  double E = 0;
  Index c{};
  for (std::int64_t k = 0; k < total; ++k) {
    double mag_sq = delta * delta;
    for (int d = 0; d < n; ++d) {
      double diff = 0;
      for (int bit = 0; bit < corners; ++bit) {
        Index idx = c;
        for (int dd = 0; dd < n; ++dd)
          idx[static_cast<size_t>(dd)] += (bit >> dd) & 1;
        diff += ((bit >> d) & 1) ? u.at(idx) : -u.at(idx);
      }
      double gd = diff / ((corners / 2) * u.spacing(d)) + (shift.n ? shift[d] : 0.0);
      mag_sq += gd * gd;
    }
    double p = p_cells[static_cast<size_t>(k)];
    E += cell_vol * std::pow(mag_sq, 0.5 * p) / p;
    for (int d = n - 1; d >= 0; --d) {
      if (++c[static_cast<size_t>(d)] < cells[static_cast<size_t>(d)]) break;
      c[static_cast<size_t>(d)] = 0;
    }
  }

  // nodal trapezoid quadrature for the linear term
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
    double w = 1;
    for (int d = 0; d < n; ++d) {
      int i = idx[static_cast<size_t>(d)];
      w *= u.spacing(d) * ((i == 0 || i == u.shape(d) - 1) ? 0.5 : 1.0);
    }
    E += w * f.at(flat) * u.at(flat);
  });
  return E;
}

std::vector<double> sample_cell_exponent(const GridFunction& u,
                                         const ExponentField& P) {
  const int n = u.dim();
  Index cells{};
  std::int64_t total = 1;
  for (int d = 0; d < n; ++d) {
    cells[static_cast<size_t>(d)] = u.shape(d) - 1;
    total *= cells[static_cast<size_t>(d)];
  }
  std::vector<double> out(static_cast<size_t>(total));
  Index c{};
  for (std::int64_t k = 0; k < total; ++k) {
    Vec x = u.position(c);
    for (int d = 0; d < n; ++d) x[d] += 0.5 * u.spacing(d);
    out[static_cast<size_t>(k)] = P(x);
    for (int d = n - 1; d >= 0; --d) {
      if (++c[static_cast<size_t>(d)] < cells[static_cast<size_t>(d)]) break;
      c[static_cast<size_t>(d)] = 0;
    }
  }
  return out;
}

SolveResult run_gauss_seidel(const ExponentField& P, const GridFunction& f,
                             const Vec& shift, const GridFunction& boundary,
                             const SolveConfig& cfg,
                             const std::vector<std::uint8_t>* active,
                             int nesting_budget) {
  GridFunction::require_compatible(f, boundary, "solve");
  require(cfg.tolerance > 0, ErrorKind::validation, "tolerance must be positive");
  require(cfg.max_iterations > 0, ErrorKind::validation,
          "iteration budget must be positive");
  if (active) {
    require(active->size() == static_cast<size_t>(f.size()), ErrorKind::validation,
            "active mask size mismatch");
  }

  GridFunction u = boundary;  // inactive nodes keep their data; interior of
                              // `boundary` doubles as the initial guess

  // Nested iteration: solve the injected coarse problem first and prolong.
  // Masked solves skip it (the mask geometry does not coarsen safely).
  if (!active && nesting_budget != 0 && can_coarsen(u)) {
    SolveConfig coarse_cfg = cfg;
    coarse_cfg.nested_levels = nesting_budget < 0 ? -1 : nesting_budget - 1;
    coarse_cfg.tolerance = std::max(cfg.tolerance, 1e-11);
    SolveResult coarse = run_gauss_seidel(P, restrict_injection(f), shift,
                                          restrict_injection(boundary), coarse_cfg,
                                          nullptr, coarse_cfg.nested_levels);
    GridFunction init = boundary;
    prolong_into(coarse.u, init);
    // keep the exact boundary data
    for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
      if (!u.is_boundary(idx)) u.at(flat) = init.at(flat);
    });
  }

  GaussSeidel gs;
  gs.shift = shift;
  gs.delta = cfg.flux_delta;
  gs.bind(P, u, f);

  std::vector<std::int64_t> nodes;
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
    bool is_active = active ? (*active)[static_cast<size_t>(flat)] != 0
                            : u.is_interior(idx);
    if (!is_active) return;
    require(u.has_margin(idx, 1), ErrorKind::validation,
            "active node lacks a full neighborhood");
    nodes.push_back(flat);
  });
  require(!nodes.empty(), ErrorKind::validation, "no active nodes to solve for");

  std::vector<double> p_cells = sample_cell_exponent(u, P);
  double omega = cfg.relaxation > 0 ? cfg.relaxation
                                    : auto_relaxation(u, gs.p2_fast);

  SolveResult out;
  double best_res = std::numeric_limits<double>::infinity();
  int bad_streak = 0;
  for (int sweep = 1; sweep <= cfg.max_iterations; ++sweep) {
    double sweep_res = 0;
    for (std::int64_t flat : nodes) {
      Index idx = u.unflatten(flat);
      double t_star = gs.solve_node(idx);
      double t_old = u.at(flat);
      sweep_res = std::max(sweep_res, std::fabs(gs.residual_at(idx)));
      u.at(flat) = t_old + omega * (t_star - t_old);
    }

    double energy = smooth_energy(u, p_cells, f, shift, cfg.flux_delta);
    out.history.entries.push_back({sweep, sweep_res, energy});
    out.iterations = sweep;

    if (sweep_res > 2.0 * best_res) {
      if (++bad_streak >= 5 && omega > 1.0) {
        omega = std::max(1.0, 1.0 + 0.6 * (omega - 1.0));
        bad_streak = 0;
      }
    } else {
      bad_streak = 0;
    }
    best_res = std::min(best_res, sweep_res);

    if (sweep_res <= cfg.tolerance) {
      // settle check: residual with no intervening updates
      double settled = 0;
      for (std::int64_t flat : nodes)
        settled = std::max(settled, std::fabs(gs.residual_at(u.unflatten(flat))));
      out.final_residual = settled;
      if (settled <= cfg.tolerance) {
        out.u = std::move(u);
        return out;
      }
    }
  }

  double settled = 0;
  for (std::int64_t flat : nodes)
    settled = std::max(settled, std::fabs(gs.residual_at(u.unflatten(flat))));
  Error err(ErrorKind::nonconvergence,
            "solver exhausted " + std::to_string(cfg.max_iterations) +
                " sweeps, final residual " + format_double(settled));
  err.payload = settled;
  throw err;
}

}  // namespace

SolveResult solve_dirichlet(const ExponentField& P, const GridFunction& f,
                            const GridFunction& boundary, const SolveConfig& cfg,
                            const std::vector<std::uint8_t>* active) {
  Vec no_shift;
  return run_gauss_seidel(P, f, no_shift, boundary, cfg, active,
                          cfg.nested_levels);
}

SolveResult solve_shifted(const ExponentField& P, const GridFunction& f,
                          const Vec& e, const GridFunction& boundary,
                          const SolveConfig& cfg,
                          const std::vector<std::uint8_t>* active) {
  require(e.dim() == f.dim(), ErrorKind::validation, "shift dimension mismatch");
  require(std::fabs(norm(e) - 1.0) < 1e-12, ErrorKind::validation,
          "shift vector must be unit length");
  return run_gauss_seidel(P, f, e, boundary, cfg, active, cfg.nested_levels);
}

// ---------------------------------------------------------------------------
// Energy minimization
// ---------------------------------------------------------------------------

EnergyProblem::EnergyProblem(ExponentField P_, GridFunction f_, GridFunction Q_,
                             GridFunction boundary_)
    : P(std::move(P_)), f(std::move(f_)), Q(std::move(Q_)),
      boundary(std::move(boundary_)) {
  GridFunction::require_compatible(f, Q, "EnergyProblem");
  GridFunction::require_compatible(f, boundary, "EnergyProblem");
  require(Q.min_value() >= 0, ErrorKind::validation,
          "interface speed Q must be nonnegative");
}

double EnergyProblem::phase_weight(std::int64_t flat,
                                   const std::vector<double>& p_nodes) const {
  // (1 - 1/p) Q^p: the weight for which the optimal-slab slope is exactly Q.
  double p = p_nodes[static_cast<size_t>(flat)];
  double q = Q.at(flat);
  return (1.0 - 1.0 / p) * std::pow(q, p);
}

double discrete_energy(const GridFunction& u, const EnergyProblem& prob,
                       double delta) {
  std::vector<double> p_cells = sample_cell_exponent(u, prob.P);
  std::vector<double> p_nodes = sample_exponent(u, prob.P);
  Vec no_shift;
  double E = smooth_energy(u, p_cells, prob.f, no_shift, delta);
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
    if (!(u.at(flat) > 0.0)) return;
    double w = 1;
    for (int d = 0; d < u.dim(); ++d) {
      int i = idx[static_cast<size_t>(d)];
      w *= u.spacing(d) * ((i == 0 || i == u.shape(d) - 1) ? 0.5 : 1.0);
    }
    E += w * prob.phase_weight(flat, p_nodes);
  });
  return E;
}

namespace {

// Per-node data of the cell-quadrature smooth energy as a function of the
// node value t: for each adjacent cell, the center gradient is affine in t.
struct EnergyUpdater {
  const GridFunction* u = nullptr;
  const EnergyProblem* prob = nullptr;
  const std::vector<double>* p_cells = nullptr;
  const std::vector<double>* p_nodes = nullptr;
  double delta = kDefaultFluxDelta;
  double cell_vol = 1;
  bool p2_fast = false;

  struct CellView {
    Vec base_grad;   // gradient with the node's contribution removed
    Vec dgrad;       // d(gradient)/dt
    double p = 2;
  };

  // Gathers the up-to-2^n adjacent cells of `idx`.
  int gather(const Index& idx, std::array<CellView, 1 << kMaxDim>& cells) const {
    const int n = u->dim();
    const int corners = 1 << n;
    int count = 0;
    Index cell_counts{};
    for (int d = 0; d < n; ++d) cell_counts[static_cast<size_t>(d)] = u->shape(d) - 1;
    for (int off = 0; off < corners; ++off) {
      Index c = idx;
      bool ok = true;
      for (int d = 0; d < n; ++d) {
        c[static_cast<size_t>(d)] -= (off >> d) & 1;
        if (c[static_cast<size_t>(d)] < 0 ||
            c[static_cast<size_t>(d)] >= cell_counts[static_cast<size_t>(d)])
          ok = false;
      }
      if (!ok) continue;
      CellView view;
      view.base_grad = Vec::zero(n);
      view.dgrad = Vec::zero(n);
      // flat cell index for the exponent cache
      std::int64_t cflat = 0;
      for (int d = 0; d < n; ++d)
        cflat = cflat * cell_counts[static_cast<size_t>(d)] + c[static_cast<size_t>(d)];
      view.p = (*p_cells)[static_cast<size_t>(cflat)];
      for (int bit = 0; bit < corners; ++bit) {
        Index corner = c;
        bool is_node = true;
        for (int d = 0; d < n; ++d) {
          corner[static_cast<size_t>(d)] += (bit >> d) & 1;
          if (corner[static_cast<size_t>(d)] != idx[static_cast<size_t>(d)])
            is_node = false;
        }
        double val = u->at(corner);
        for (int d = 0; d < n; ++d) {
          double w = (((bit >> d) & 1) ? 1.0 : -1.0) / ((corners / 2) * u->spacing(d));
          if (is_node)
            view.dgrad[d] += w;
          else
            view.base_grad[d] += w * val;
        }
      }
      cells[static_cast<size_t>(count++)] = view;
    }
    return count;
  }

  // E_s(t) restricted to the gathered cells (plus the nodal f term).
  double local_energy(const std::array<CellView, 1 << kMaxDim>& cells, int count,
                      double t, double f_w, double node_w) const {
    double E = f_w * t * node_w;
    for (int k = 0; k < count; ++k) {
      const CellView& cv = cells[static_cast<size_t>(k)];
      double mag_sq = delta * delta;
      for (int d = 0; d < cv.base_grad.n; ++d) {
        double g = cv.base_grad[d] + t * cv.dgrad[d];
        mag_sq += g * g;
      }
      E += cell_vol * std::pow(mag_sq, 0.5 * cv.p) / cv.p;
    }
    return E;
  }

  void derivatives(const std::array<CellView, 1 << kMaxDim>& cells, int count,
                   double t, double f_w, double node_w, double& E1, double& E2) const {
    E1 = f_w * node_w;
    E2 = 0;
    for (int k = 0; k < count; ++k) {
      const CellView& cv = cells[static_cast<size_t>(k)];
      double mag_sq = delta * delta;
      double gdot = 0, dnorm_sq = 0;
      for (int d = 0; d < cv.base_grad.n; ++d) {
        double g = cv.base_grad[d] + t * cv.dgrad[d];
        mag_sq += g * g;
        gdot += g * cv.dgrad[d];
        dnorm_sq += cv.dgrad[d] * cv.dgrad[d];
      }
      if (p2_fast) {
        E1 += cell_vol * gdot;
        E2 += cell_vol * dnorm_sq;
        continue;
      }
      double Mp = std::pow(mag_sq, 0.5 * (cv.p - 4.0));
      E1 += cell_vol * Mp * mag_sq * gdot;  // M^{(p-2)/2} (G·G')
      E2 += cell_vol * Mp * ((cv.p - 2.0) * gdot * gdot + mag_sq * dnorm_sq);
    }
  }

  // Unconstrained minimizer of the convex smooth part (strictly convex:
  // E2 >= cell_vol * δ^{p-2} |dgrad|² > 0).
  double smooth_minimizer(const std::array<CellView, 1 << kMaxDim>& cells,
                          int count, double t0, double f_w, double node_w) const {
    double t = t0;
    double E1, E2;
    for (int it = 0; it < 80; ++it) {
      derivatives(cells, count, t, f_w, node_w, E1, E2);
      if (p2_fast) return t - E1 / E2;  // quadratic energy: one step is exact
      if (std::fabs(E1) < 1e-15 * (1.0 + std::fabs(f_w))) return t;
      double step = E1 / E2;
      double t_next = t - step;
      if (!std::isfinite(t_next)) break;
      if (std::fabs(t_next - t) < 1e-16 * (1.0 + std::fabs(t))) return t_next;
      t = t_next;
    }
    return t;
  }
};

}  // namespace

EnergyResult minimize_energy(const EnergyProblem& prob, const SolveConfig& cfg,
                             const GridFunction* initial) {
  const GridFunction& tmpl = prob.boundary;
  GridFunction u = initial ? *initial : tmpl;
  GridFunction::require_compatible(u, tmpl, "minimize_energy initial guess");

  // Nested iteration on dyadic grids: minimize on the injected coarse problem
  // and prolong the result (interface lands near its final position early).
  bool prolonged = false;
  if (!initial && cfg.nested_levels != 0 && can_coarsen(tmpl)) {
    SolveConfig coarse_cfg = cfg;
    coarse_cfg.nested_levels = cfg.nested_levels < 0 ? -1 : cfg.nested_levels - 1;
    EnergyProblem coarse(prob.P, restrict_injection(prob.f),
                         restrict_injection(prob.Q),
                         restrict_injection(prob.boundary));
    EnergyResult cr = minimize_energy(coarse, coarse_cfg, nullptr);
    prolong_into(cr.u, u);
    for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
      if (u.is_boundary(idx)) u.at(flat) = tmpl.at(flat);
    });
    prolonged = true;
  }

  EnergyUpdater up;
  up.u = &u;
  up.prob = &prob;
  std::vector<double> p_cells = sample_cell_exponent(u, prob.P);
  std::vector<double> p_nodes = sample_exponent(u, prob.P);
  up.p_cells = &p_cells;
  up.p_nodes = &p_nodes;
  up.delta = cfg.flux_delta;
  up.cell_vol = 1;
  for (int d = 0; d < u.dim(); ++d) up.cell_vol *= u.spacing(d);
  up.p2_fast = prob.P.is_constant() && std::fabs(prob.P.p0() - 2.0) < 1e-15;

  std::vector<std::int64_t> nodes;
  std::vector<double> node_weight(static_cast<size_t>(u.size()), 0.0);
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
    double w = 1;
    for (int d = 0; d < u.dim(); ++d) {
      int i = idx[static_cast<size_t>(d)];
      w *= u.spacing(d) * ((i == 0 || i == u.shape(d) - 1) ? 0.5 : 1.0);
    }
    node_weight[static_cast<size_t>(flat)] = w;
    if (u.is_interior(idx)) nodes.push_back(flat);
  });

  EnergyResult out;
  Vec no_shift;

  // One cyclic-minimization stage with the nodal phase weight multiplied by
  // kappa (nullptr = the true functional). Ends when the per-sweep decrease
  // drops below tolerance (returns true), when `cap` sweeps have run, when
  // `flip_window` consecutive sweeps changed no node's sign, or when the
  // shared budget is exhausted. Only the true-functional stage is recorded in
  // the public history, so the energy column is monotone for the functional
  // the result reports.
  auto run_stage = [&](const std::vector<double>* kappa, bool record,
                       int& budget, int flip_window, int cap) -> bool {
    auto stage_energy = [&]() {
      if (!kappa) return discrete_energy(u, prob, cfg.flux_delta);
      double Es = smooth_energy(u, p_cells, prob.f, no_shift, cfg.flux_delta);
      for_each_node(u, [&](std::int64_t flat, const Index&, const Vec&) {
        if (!(u.at(flat) > 0.0)) return;
        Es += node_weight[static_cast<size_t>(flat)] *
              prob.phase_weight(flat, p_nodes) *
              (*kappa)[static_cast<size_t>(flat)];
      });
      return Es;
    };
    double E = stage_energy();
    const double tol = cfg.energy_tolerance > 0
                           ? cfg.energy_tolerance
                           : 1e-12 * (1.0 + std::fabs(E));
    int last_flip = 0;
    for (int sweep = 1; budget > 0 && sweep <= cap; ++sweep, --budget) {
      bool flipped = false;
      for (std::int64_t flat : nodes) {
        Index idx = u.unflatten(flat);
        std::array<EnergyUpdater::CellView, 1 << kMaxDim> cells;
        int count = up.gather(idx, cells);
        double node_w = node_weight[static_cast<size_t>(flat)];
        double f_val = prob.f.at(flat);
        double t_star =
            up.smooth_minimizer(cells, count, u.at(flat), f_val, node_w);
        // two candidates: untruncated smooth minimizer vs truncation to zero
        double lambda = prob.phase_weight(flat, p_nodes) * node_w *
                        (kappa ? (*kappa)[static_cast<size_t>(flat)] : 1.0);
        double e_star = up.local_energy(cells, count, t_star, f_val, node_w) +
                        (t_star > 0 ? lambda : 0.0);
        double e_zero = up.local_energy(cells, count, 0.0, f_val, node_w);
        double t_new = e_star < e_zero ? t_star : 0.0;  // tie prefers truncation
        if ((t_new > 0.0) != (u.at(flat) > 0.0)) flipped = true;
        u.at(flat) = t_new;
      }
      if (flipped) last_flip = sweep;

      double E_new = stage_energy();
      double decrease = E - E_new;
      require(decrease >= -1e-9 * (1.0 + std::fabs(E)), ErrorKind::validation,
              "energy increased across a sweep (discretization bug)");
      ++out.iterations;
      if (record) {
        out.history.entries.push_back({sweep, decrease, E_new});
        out.final_energy = E_new;
        out.final_decrease = decrease;
      }
      E = E_new;
      if (decrease < tol) return true;
      if (flip_window > 0 && sweep - last_flip >= flip_window) return false;
    }
    return false;
  };

  // Phase-weight continuation for self-chosen starts. The single-node update
  // has an O(1) hysteresis band around the optimal interface slope: for a
  // locally affine profile of slope s, truncating the last positive node pays
  // (2^p - 2) s^p h / p of smooth energy against a phase saving of lambda h,
  // and growing the first zero node gains (1 - 2^{1-p}) s^p h / p against a
  // phase cost of lambda h, so plain descent parks the interface wherever the
  // start left it with s anywhere inside the band between the two thresholds.
  // The optimal-slab slope (p lambda / (p-1))^{1/p} sits strictly inside that
  // band. Running first with the phase weight scaled by (2^p - 2)/(p - 1)
  // places the truncation threshold exactly at the optimal slope (the
  // interface creeps inward and stops there), then with a slightly inflated
  // (1 - 2^{1-p})/(p - 1) places the growth threshold just above it (the
  // inflation keeps the growth stage from re-flipping the node the creep
  // stopped on), and the final true-weight stage leaves the interface fixed
  // while the smooth part converges. Each stage is the same pointwise
  // two-candidate descent, and the reported result is a critical point of the
  // true functional. After a nested prolongation the interface is already
  // within a couple of nodes of its target, so the warm-up stages run with a
  // sweep cap and a no-flip cutoff instead of full energy convergence; the
  // coarsest level runs them to convergence, which is where the basin gets
  // picked.
  int budget = cfg.max_iterations;
  if (!initial) {
    bool any_phase = false;
    for (std::int64_t flat : nodes)
      if (prob.phase_weight(flat, p_nodes) > 0) {
        any_phase = true;
        break;
      }
    if (any_phase) {
      constexpr double kGrowthSlack = 0.05;  // tolerated slope overshoot
      std::vector<double> shrink(p_nodes.size()), grow(p_nodes.size());
      for (size_t i = 0; i < p_nodes.size(); ++i) {
        double p = p_nodes[i];
        shrink[i] = (std::pow(2.0, p) - 2.0) / (p - 1.0);
        grow[i] = (1.0 - std::pow(2.0, 1.0 - p)) / (p - 1.0) *
                  std::pow(1.0 + kGrowthSlack, p);
      }
      int window = prolonged ? 64 : 0;
      int cap = prolonged ? 512 : std::numeric_limits<int>::max();
      run_stage(&shrink, false, budget, window, cap);
      run_stage(&grow, false, budget, window, cap);
    }
  }

  if (run_stage(nullptr, true, budget, 0, std::numeric_limits<int>::max())) {
    out.u = std::move(u);
    return out;
  }

  Error err(ErrorKind::nonconvergence,
            "energy minimization exhausted " + std::to_string(cfg.max_iterations) +
                " sweeps");
  err.payload = out.history.entries.empty() ? 0.0
                                            : out.history.entries.back().residual;
  throw err;
}

// ---------------------------------------------------------------------------
// Linearized Neumann problem on the half box
// ---------------------------------------------------------------------------

SolveResult solve_neumann_linearized(double p0, double rho, int dim,
                                     const std::function<double(const Vec&)>& data,
                                     double h, const SolveConfig& cfg) {
  require(p0 > 1.0, ErrorKind::validation, "linearized operator needs p0 > 1");
  require(dim >= 2 && dim <= kMaxDim, ErrorKind::validation,
          "half-box problem needs dimension in [2,4]");
  require(rho > 0 && h > 0, ErrorKind::validation, "rho and h must be positive");

  Vec lo(dim), hi(dim);
  for (int d = 0; d < dim - 1; ++d) {
    lo[d] = -rho;
    hi[d] = rho;
  }
  lo[dim - 1] = 0;
  hi[dim - 1] = rho;
  GridFunction u = GridFunction::with_spacing(Box(lo, hi), h);
  u.sample(data);  // Dirichlet sides keep this; interior serves as the guess

  auto dirichlet = [&](const Index& idx) {
    for (int d = 0; d < dim - 1; ++d) {
      int i = idx[static_cast<size_t>(d)];
      if (i == 0 || i == u.shape(d) - 1) return true;
    }
    return idx[static_cast<size_t>(dim - 1)] == u.shape(dim - 1) - 1;  // top
  };

  std::vector<std::int64_t> nodes;
  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec&) {
    if (!dirichlet(idx)) nodes.push_back(flat);
  });

  // stencil: sum_d c_d (u_+ + u_- - 2u)/h_d² = 0, c_d = 1 except c_n = p0-1;
  // bottom row reflects: u_- := u_+ in the normal direction.
  auto neighbors = [&](const Index& idx, double& num, double& den) {
    num = 0;
    den = 0;
    for (int d = 0; d < dim; ++d) {
      double c = (d == dim - 1) ? (p0 - 1.0) : 1.0;
      double inv_h2 = c / (u.spacing(d) * u.spacing(d));
      Index p = idx, m = idx;
      p[static_cast<size_t>(d)] += 1;
      m[static_cast<size_t>(d)] -= 1;
      if (d == dim - 1 && idx[static_cast<size_t>(d)] == 0)
        m = p;  // reflection ghost across {x_n = 0}
      num += inv_h2 * (u.at(p) + u.at(m));
      den += 2.0 * inv_h2;
    }
  };

  double omega = cfg.relaxation > 0 ? cfg.relaxation : auto_relaxation(u, true);
  SolveResult out;
  for (int sweep = 1; sweep <= cfg.max_iterations; ++sweep) {
    double res = 0;
    for (std::int64_t flat : nodes) {
      Index idx = u.unflatten(flat);
      double num, den;
      neighbors(idx, num, den);
      double r = num - den * u.at(flat);
      res = std::max(res, std::fabs(r));
      u.at(flat) += omega * r / den;
    }
    out.history.entries.push_back({sweep, res, 0.0});
    out.iterations = sweep;
    if (res <= cfg.tolerance) {
      double settled = 0;
      for (std::int64_t flat : nodes) {
        Index idx = u.unflatten(flat);
        double num, den;
        neighbors(idx, num, den);
        settled = std::max(settled, std::fabs(num - den * u.at(flat)));
      }
      out.final_residual = settled;
      if (settled <= cfg.tolerance) {
        out.u = std::move(u);
        return out;
      }
    }
  }
  Error err(ErrorKind::nonconvergence, "Neumann solve exhausted iteration budget");
  err.payload = out.history.entries.back().residual;
  throw err;
}

double quadratic_remainder_constant(const GridFunction& u, double r) {
  const int n = u.dim();
  Index origin{};
  for (int d = 0; d < n - 1; ++d) {
    require(u.shape(d) % 2 == 1, ErrorKind::validation,
            "origin must be a lattice node (odd tangential shape)");
    origin[static_cast<size_t>(d)] = (u.shape(d) - 1) / 2;
  }
  origin[static_cast<size_t>(n - 1)] = 0;
  Vec x0 = u.position(origin);
  require(norm(x0) < 1e-12, ErrorKind::validation,
          "half-box grid does not contain the origin");

  double u0 = u.at(origin);
  Vec g(n);  // tangential central differences; normal derivative is 0 (BC)
  for (int d = 0; d < n - 1; ++d) {
    Index p = origin, m = origin;
    p[static_cast<size_t>(d)] += 1;
    m[static_cast<size_t>(d)] -= 1;
    g[d] = (u.at(p) - u.at(m)) / (2.0 * u.spacing(d));
  }

  double worst = 0;
  for_each_node(u, [&](std::int64_t flat, const Index&, const Vec& x) {
    if (norm(x) > r) return;
    double rem = std::fabs(u.at(flat) - u0 - dot(g, x));
    worst = std::max(worst, rem);
  });
  return worst / (r * r);
}

}  // namespace pxfb
