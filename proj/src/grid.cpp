#include "pxfb/grid.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace pxfb {

Box::Box(Vec lo_, Vec hi_) : lo(lo_), hi(hi_) {
  require(lo.dim() == hi.dim() && lo.dim() >= 1 && lo.dim() <= kMaxDim,
          ErrorKind::validation, "box corners must share a dimension in [1,4]");
  for (int d = 0; d < lo.dim(); ++d)
    require(hi[d] > lo[d], ErrorKind::validation, "box must have positive extent");
}

bool Box::contains(const Vec& x, double tol) const {
  for (int d = 0; d < dim(); ++d)
    if (x[d] < lo[d] - tol || x[d] > hi[d] + tol) return false;
  return true;
}

double Box::volume() const {
  double v = 1;
  for (int d = 0; d < dim(); ++d) v *= extent(d);
  return v;
}

GridFunction::GridFunction(Box box, Index shape) : box_(box), shape_(shape) {
  std::int64_t total = 1;
  for (int d = 0; d < dim(); ++d) {
    require(shape_[static_cast<size_t>(d)] >= 2, ErrorKind::validation,
            "grid needs at least 2 nodes per axis");
    h_[static_cast<size_t>(d)] = box_.extent(d) / (shape_[static_cast<size_t>(d)] - 1);
    total *= shape_[static_cast<size_t>(d)];
  }
  values_.assign(static_cast<size_t>(total), 0.0);
  init_strides();
}

GridFunction GridFunction::with_spacing(Box box, double h) {
  require(h > 0, ErrorKind::validation, "spacing must be positive");
  Index shape{};
  for (int d = 0; d < box.dim(); ++d) {
    double count = box.extent(d) / h;
    int cells = static_cast<int>(std::llround(count));
    require(cells >= 1 && std::fabs(count - cells) < 1e-9,
            ErrorKind::validation,
            "spacing must divide the box extent exactly");
    shape[static_cast<size_t>(d)] = cells + 1;
  }
  return GridFunction(box, shape);
}

void GridFunction::init_strides() {
  std::int64_t s = 1;
  for (int d = dim() - 1; d >= 0; --d) {
    stride_[static_cast<size_t>(d)] = s;
    s *= shape_[static_cast<size_t>(d)];
  }
}

double GridFunction::max_spacing() const {
  double m = 0;
  for (int d = 0; d < dim(); ++d) m = std::max(m, spacing(d));
  return m;
}

std::int64_t GridFunction::flatten(const Index& idx) const {
  std::int64_t flat = 0;
  for (int d = 0; d < dim(); ++d)
    flat += stride_[static_cast<size_t>(d)] * idx[static_cast<size_t>(d)];
  return flat;
}

Index GridFunction::unflatten(std::int64_t flat) const {
  Index idx{};
  for (int d = 0; d < dim(); ++d) {
    idx[static_cast<size_t>(d)] =
        static_cast<int>(flat / stride_[static_cast<size_t>(d)]);
    flat %= stride_[static_cast<size_t>(d)];
  }
  return idx;
}

Vec GridFunction::position(const Index& idx) const {
  Vec x(dim());
  for (int d = 0; d < dim(); ++d)
    x[d] = box_.lo[d] + h_[static_cast<size_t>(d)] * idx[static_cast<size_t>(d)];
  return x;
}

bool GridFunction::is_boundary(const Index& idx) const {
  for (int d = 0; d < dim(); ++d) {
    int i = idx[static_cast<size_t>(d)];
    if (i == 0 || i == shape(d) - 1) return true;
  }
  return false;
}

bool GridFunction::is_interior(const Index& idx) const { return !is_boundary(idx); }

bool GridFunction::has_margin(const Index& idx, int margin) const {
  for (int d = 0; d < dim(); ++d) {
    int i = idx[static_cast<size_t>(d)];
    if (i < margin || i > shape(d) - 1 - margin) return false;
  }
  return true;
}

void GridFunction::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void GridFunction::sample(const std::function<double(const Vec&)>& f) {
  for_each_node(*this, [&](std::int64_t flat, const Index&, const Vec& x) {
    values_[static_cast<size_t>(flat)] = f(x);
  });
}

double GridFunction::interpolate(const Vec& x) const {
  require(x.dim() == dim(), ErrorKind::grid_mismatch,
          "interpolation point dimension mismatch");
  std::array<int, kMaxDim> base{};
  std::array<double, kMaxDim> frac{};
  for (int d = 0; d < dim(); ++d) {
    double h = spacing(d);
    double t = (x[d] - box_.lo[d]) / h;
    require(t >= -1e-9 && t <= shape(d) - 1 + 1e-9, ErrorKind::validation,
            "interpolation point outside grid box");
    t = std::clamp(t, 0.0, static_cast<double>(shape(d) - 1));
    int i = std::min(static_cast<int>(t), shape(d) - 2);
    base[static_cast<size_t>(d)] = i;
    frac[static_cast<size_t>(d)] = t - i;
  }
  double acc = 0;
  int corners = 1 << dim();
  for (int c = 0; c < corners; ++c) {
    double w = 1;
    Index idx{};
    for (int d = 0; d < dim(); ++d) {
      int bit = (c >> d) & 1;
      idx[static_cast<size_t>(d)] = base[static_cast<size_t>(d)] + bit;
      w *= bit ? frac[static_cast<size_t>(d)] : 1.0 - frac[static_cast<size_t>(d)];
    }
    if (w != 0.0) acc += w * at(idx);
  }
  return acc;
}

double GridFunction::sup_norm() const {
  double m = 0;
  for (double v : values_) m = std::max(m, std::fabs(v));
  return m;
}

double GridFunction::min_value() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : values_) m = std::min(m, v);
  return m;
}

double GridFunction::max_value() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values_) m = std::max(m, v);
  return m;
}

bool GridFunction::compatible_with(const GridFunction& other) const {
  if (dim() != other.dim()) return false;
  for (int d = 0; d < dim(); ++d) {
    if (shape(d) != other.shape(d)) return false;
    if (std::fabs(box_.lo[d] - other.box_.lo[d]) > 1e-12) return false;
    if (std::fabs(box_.hi[d] - other.box_.hi[d]) > 1e-12) return false;
  }
  return true;
}

void GridFunction::require_compatible(const GridFunction& a, const GridFunction& b,
                                      const std::string& what) {
  require(a.compatible_with(b), ErrorKind::grid_mismatch,
          what + ": grid functions live on different lattices");
}

std::string GridFunction::to_json_string() const {
  nlohmann::json j;
  j["dim"] = dim();
  for (int d = 0; d < dim(); ++d) {
    j["lo"].push_back(box_.lo[d]);
    j["hi"].push_back(box_.hi[d]);
    j["shape"].push_back(shape(d));
  }
  j["order"] = "lexicographic";
  j["values"] = values_;
  return j.dump(2);
}

GridFunction GridFunction::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  int dim = j.at("dim").get<int>();
  require(dim >= 1 && dim <= kMaxDim, ErrorKind::validation,
          "grid JSON dimension outside [1,4]");
  Vec lo(dim), hi(dim);
  Index shape{};
  for (int d = 0; d < dim; ++d) {
    lo[d] = j.at("lo").at(static_cast<size_t>(d)).get<double>();
    hi[d] = j.at("hi").at(static_cast<size_t>(d)).get<double>();
    shape[static_cast<size_t>(d)] = j.at("shape").at(static_cast<size_t>(d)).get<int>();
  }
  GridFunction g(Box(lo, hi), shape);
  auto vals = j.at("values").get<std::vector<double>>();
  require(vals.size() == g.values_.size(), ErrorKind::validation,
          "grid JSON value count does not match shape");
  g.values_ = std::move(vals);
  return g;
}

void GridFunction::save_json(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::io, "cannot open " + path + " for writing");
  os << to_json_string() << "\n";
}

GridFunction GridFunction::load_json(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::io, "cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return from_json_string(text);
}

void GridFunction::save_csv(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::io, "cannot open " + path + " for writing");
  for (int d = 0; d < dim(); ++d) os << "x" << d << ",";
  os << "value\n";
  for_each_node(*this, [&](std::int64_t flat, const Index&, const Vec& x) {
    for (int d = 0; d < dim(); ++d) os << format_double(x[d]) << ",";
    os << format_double(values_[static_cast<size_t>(flat)]) << "\n";
  });
}

PositivePhase extract_positive_phase(const GridFunction& u) {
  PositivePhase phase;
  phase.mask.assign(static_cast<size_t>(u.size()), 0);
  for (std::int64_t i = 0; i < u.size(); ++i)
    phase.mask[static_cast<size_t>(i)] = u.at(i) > 0.0 ? 1 : 0;

  for_each_node(u, [&](std::int64_t flat, const Index& idx, const Vec& x) {
    double ua = u.at(flat);
    if (!(ua > 0.0)) return;
    for (int d = 0; d < u.dim(); ++d) {
      for (int dir = -1; dir <= 1; dir += 2) {
        Index nb = idx;
        nb[static_cast<size_t>(d)] += dir;
        int i = nb[static_cast<size_t>(d)];
        if (i < 0 || i >= u.shape(d)) continue;
        double ub = u.at(nb);
        if (ub > 0.0) continue;
        // zero crossing along the edge; ua > 0 >= ub
        double t = ua / (ua - ub);  // in (0, 1]
        Vec p = x;
        p[d] += dir * t * u.spacing(d);
        FreeBoundaryPoint fb;
        fb.x = p;
        fb.node = flat;
        fb.axis = d;
        phase.boundary.push_back(fb);
      }
    }
  });
  return phase;
}

double distance_to_free_boundary(const PositivePhase& phase, const Vec& x) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& fb : phase.boundary) best = std::min(best, norm(fb.x - x));
  return best;
}

}  // namespace pxfb
