#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace stochsynth {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Infinity norm is used throughout: |x| = max_i |x_i|, and the induced
// matrix norm is the maximum absolute row sum.
inline double inf_norm(const Vec& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }
inline double inf_norm(const Mat& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Axis-aligned box prod_i [lo_i, hi_i].
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_);

  std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }
  Vec edges() const { return hi - lo; }
  /// Smallest edge length.
  double span() const;
  bool contains(const Vec& x, double tol = 0.0) const;
  Vec clamp(const Vec& x) const;
  /// Point-to-set distance inf_{w in box} |x - w|.
  double distance(const Vec& x) const { return inf_norm(Vec(x - clamp(x))); }
  /// Box shrunk inward by `margin` on every side.
  Box shrunk(double margin) const;
  bool degenerate() const;
};

/// Uniform [lo,hi] cube in n dimensions.
Box cube(std::size_t n, double lo, double hi);

}  // namespace stochsynth
