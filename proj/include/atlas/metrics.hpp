#ifndef ATLAS_METRICS_HPP
#define ATLAS_METRICS_HPP

#include <algorithm>
#include <cstddef>
#include <vector>

#include "atlas/errors.hpp"
#include "atlas/tensor.hpp"

namespace atlas {

/// u.v / (|u| |v|), clamped to [-1, 1]. Throws DegenerateError on a zero
/// vector.
template <typename DerivedU, typename DerivedV>
double cosine_similarity(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v) {
  if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw DegenerateError("cosine_similarity: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

/// Coefficient of determination of the least-squares line through (x, y).
/// A constant y is fitted exactly and gives 1.
inline double linear_fit_r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("linear_fit_r_squared: length mismatch");
  if (x.size() < 2) throw PreconditionError("linear_fit_r_squared: need at least two points");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DegenerateError("linear_fit_r_squared: x is constant");
  if (!(syy > 0.0)) return 1.0;
  const double slope = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (my + slope * (x[i] - mx));
    ss_res += r * r;
  }
  return 1.0 - ss_res / syy;
}

} // namespace atlas

#endif // ATLAS_METRICS_HPP
