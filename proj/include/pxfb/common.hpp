#pragma once

// Shared small types for the variable-exponent free-boundary toolkit:
// fixed-capacity vectors/matrices (spatial dimension <= kMaxDim), the typed
// error hierarchy, and a handful of numeric helpers used across modules.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pxfb {

inline constexpr int kMaxDim = 4;
inline constexpr const char* kVersion = "0.1.0";

// Gradient magnitudes below this are treated as degenerate (log|∇u| blows up).
inline constexpr double kGradientFloor = 1e-12;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  validation,            // bad inputs, domain violations, malformed config
  gradient_degenerate,   // |∇·| below kGradientFloor where the operator needs it
  grid_mismatch,         // incompatible boxes/spacings between grid functions
  out_of_annulus,        // barrier evaluated outside its annulus
  nonconvergence,        // iteration budget exhausted
  no_touch,              // touch localization failed (contact on window edge)
  not_on_free_boundary,  // claimed free-boundary point too far from interface
  hypothesis_violated,   // lemma-style hypothesis check failed on the data
  resolution_exhausted,  // requested scale below what the grid resolves
  certification_failure, // a certificate that must pass did not
  io,                    // file read/write problems
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

  // Carries the final residual for nonconvergence errors; NaN otherwise.
  double payload = std::numeric_limits<double>::quiet_NaN();

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

// ---------------------------------------------------------------------------
// Small dense vector / matrix (runtime dimension, inline storage)
// ---------------------------------------------------------------------------

struct Vec {
  std::array<double, kMaxDim> a{};
  int n = 0;

  Vec() = default;
  explicit Vec(int dim) : n(dim) { a.fill(0.0); }
  Vec(std::initializer_list<double> xs) {
    n = static_cast<int>(xs.size());
    int i = 0;
    for (double x : xs) a[static_cast<size_t>(i++)] = x;
  }
  static Vec zero(int dim) { return Vec(dim); }
  static Vec axis(int dim, int d, double scale = 1.0) {
    Vec v(dim);
    v[d] = scale;
    return v;
  }

  double& operator[](int i) { return a[static_cast<size_t>(i)]; }
  double operator[](int i) const { return a[static_cast<size_t>(i)]; }
  int dim() const { return n; }
};

inline Vec operator+(const Vec& x, const Vec& y) {
  Vec r(x.n);
  for (int i = 0; i < x.n; ++i) r[i] = x[i] + y[i];
  return r;
}
inline Vec operator-(const Vec& x, const Vec& y) {
  Vec r(x.n);
  for (int i = 0; i < x.n; ++i) r[i] = x[i] - y[i];
  return r;
}
inline Vec operator*(double c, const Vec& x) {
  Vec r(x.n);
  for (int i = 0; i < x.n; ++i) r[i] = c * x[i];
  return r;
}
inline double dot(const Vec& x, const Vec& y) {
  double s = 0;
  for (int i = 0; i < x.n; ++i) s += x[i] * y[i];
  return s;
}
inline double norm(const Vec& x) { return std::sqrt(dot(x, x)); }
inline Vec normalized(const Vec& x) {
  double m = norm(x);
  require(m > 0, ErrorKind::validation, "cannot normalize zero vector");
  return (1.0 / m) * x;
}

struct Mat {
  std::array<double, kMaxDim * kMaxDim> a{};
  int n = 0;

  Mat() = default;
  explicit Mat(int dim) : n(dim) { a.fill(0.0); }
  static Mat identity(int dim) {
    Mat m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }
  static Mat outer(const Vec& x, const Vec& y) {
    Mat m(x.n);
    for (int i = 0; i < x.n; ++i)
      for (int j = 0; j < x.n; ++j) m(i, j) = x[i] * y[j];
    return m;
  }

  double& operator()(int i, int j) { return a[static_cast<size_t>(i * kMaxDim + j)]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i * kMaxDim + j)]; }
  int dim() const { return n; }
};

inline Mat operator+(const Mat& x, const Mat& y) {
  Mat r(x.n);
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) r(i, j) = x(i, j) + y(i, j);
  return r;
}
inline Mat operator*(double c, const Mat& x) {
  Mat r(x.n);
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) r(i, j) = c * x(i, j);
  return r;
}
inline Vec operator*(const Mat& m, const Vec& x) {
  Vec r(x.n);
  for (int i = 0; i < x.n; ++i) {
    double s = 0;
    for (int j = 0; j < x.n; ++j) s += m(i, j) * x[j];
    r[i] = s;
  }
  return r;
}
inline double trace(const Mat& m) {
  double s = 0;
  for (int i = 0; i < m.n; ++i) s += m(i, i);
  return s;
}
// x' M x / |x|^2; the normalized second difference along x.
inline double rayleigh(const Mat& m, const Vec& x) {
  double q = dot(x, x);
  require(q > 0, ErrorKind::validation, "rayleigh quotient of zero vector");
  return dot(x, m * x) / q;
}

// ---------------------------------------------------------------------------
// A twice-differentiable scalar field given by callables. Analytic barriers,
// test polynomials and manufactured solutions all evaluate through this.
// ---------------------------------------------------------------------------

struct SmoothField {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;
};

// ---------------------------------------------------------------------------
// Misc numeric helpers
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline bool approx_equal(double x, double y, double tol) {
  return std::fabs(x - y) <= tol;
}

// log2(e_coarse / e_fine) for successive refinement by factor 2.
inline double observed_order(double e_coarse, double e_fine) {
  if (e_fine <= 0 || e_coarse <= 0) return std::numeric_limits<double>::infinity();
  return std::log2(e_coarse / e_fine);
}

}  // namespace pxfb
