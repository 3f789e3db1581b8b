#pragma once

// Uniform Cartesian lattices. GridFunction stores nodal values over a box in
// row-major (lexicographic, first axis slowest) order; that order is also the
// mandated deterministic sweep/reduction order everywhere in the toolkit.

#include <cstdint>
#include <string>
#include <vector>

#include "pxfb/common.hpp"

namespace pxfb {

struct Box {
  Vec lo, hi;

  Box() = default;
  Box(Vec lo_, Vec hi_);
  int dim() const { return lo.dim(); }
  double extent(int d) const { return hi[d] - lo[d]; }
  bool contains(const Vec& x, double tol = 0.0) const;
  double volume() const;
};

using Index = std::array<int, kMaxDim>;

class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(Box box, Index shape);  // shape = node counts per axis, >= 2
  // Isotropic target spacing; the per-axis spacing is extent/(shape-1) after
  // rounding so the box is covered exactly.
  static GridFunction with_spacing(Box box, double h);

  int dim() const { return box_.dim(); }
  const Box& box() const { return box_; }
  int shape(int d) const { return shape_[static_cast<size_t>(d)]; }
  double spacing(int d) const { return h_[static_cast<size_t>(d)]; }
  double max_spacing() const;
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  double& at(std::int64_t flat) { return values_[static_cast<size_t>(flat)]; }
  double at(std::int64_t flat) const { return values_[static_cast<size_t>(flat)]; }
  double& at(const Index& idx) { return values_[static_cast<size_t>(flatten(idx))]; }
  double at(const Index& idx) const { return values_[static_cast<size_t>(flatten(idx))]; }

  std::int64_t flatten(const Index& idx) const;
  Index unflatten(std::int64_t flat) const;
  Vec position(const Index& idx) const;
  Vec position(std::int64_t flat) const { return position(unflatten(flat)); }
  bool is_boundary(const Index& idx) const;
  bool is_interior(const Index& idx) const;
  // True if idx and all nodes within `margin` steps exist (box not exceeded).
  bool has_margin(const Index& idx, int margin) const;

  void fill(double v);
  void sample(const std::function<double(const Vec&)>& f);
  // Multilinear interpolation; x must lie in the box (tolerance 1e-12 per axis).
  double interpolate(const Vec& x) const;

  double sup_norm() const;
  double min_value() const;
  double max_value() const;

  // Same box (1e-12), same shape.
  bool compatible_with(const GridFunction& other) const;
  static void require_compatible(const GridFunction& a, const GridFunction& b,
                                 const std::string& what);

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // Serialization. JSON round-trips exactly (17 significant digits); CSV is
  // one row per node, lexicographic, columns x0..x{n-1},value.
  std::string to_json_string() const;
  static GridFunction from_json_string(const std::string& text);
  void save_json(const std::string& path) const;
  static GridFunction load_json(const std::string& path);
  void save_csv(const std::string& path) const;

 private:
  Box box_;
  Index shape_{};
  std::array<double, kMaxDim> h_{};
  std::array<std::int64_t, kMaxDim> stride_{};
  std::vector<double> values_;

  void init_strides();
};

// Visits nodes in lexicographic order: fn(flat, idx, x).
template <typename Fn>
void for_each_node(const GridFunction& g, Fn&& fn) {
  const std::int64_t size = g.size();
  Index idx{};
  for (std::int64_t flat = 0; flat < size; ++flat) {
    fn(flat, idx, g.position(idx));
    // increment multi-index, last axis fastest
    for (int d = g.dim() - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < g.shape(d)) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

// ---------------------------------------------------------------------------
// Positive phase {u > 0} and its sub-cell free boundary points.
// ---------------------------------------------------------------------------

struct FreeBoundaryPoint {
  Vec x;                 // linear-interpolation zero crossing along an edge
  std::int64_t node = 0; // flat index of the positive endpoint
  int axis = 0;          // edge direction
};

struct PositivePhase {
  std::vector<std::uint8_t> mask;  // 1 where u > 0 strictly
  std::vector<FreeBoundaryPoint> boundary;  // lexicographic edge order

  bool positive(std::int64_t flat) const { return mask[static_cast<size_t>(flat)] != 0; }
};

// Sub-cell crossings by linear interpolation on sign-change edges, in
// deterministic lexicographic (node, axis) order.
PositivePhase extract_positive_phase(const GridFunction& u);

// Distance from x to the nearest extracted free-boundary point (+inf if none).
double distance_to_free_boundary(const PositivePhase& phase, const Vec& x);

}  // namespace pxfb
