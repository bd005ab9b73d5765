#ifndef ATLAS_LINALG_HPP
#define ATLAS_LINALG_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "atlas/errors.hpp"
#include "atlas/tensor.hpp"

namespace atlas {

inline constexpr double kLayerNormEps = 1e-5;

/// Matrix product whose every entry is accumulated left to right over the
/// inner index, so results do not depend on blocking or vector width.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const Eigen::Ref<const MatrixX<Scalar>> lhs(a);
  const Eigen::Ref<const MatrixX<Scalar>> rhs(b);
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < lhs.rows(); ++i) {
    for (Eigen::Index q = 0; q < lhs.cols(); ++q) out.row(i) += lhs(i, q) * rhs.row(q);
  }
  return out;
}

/// Row-wise softmax with per-row max subtraction.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const Scalar shift = row.maxCoeff();
    Scalar total = 0;
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      row(j) = std::exp(row(j) - shift);
      total += row(j);
    }
    row /= total;
  }
  return out;
}

/// Per-row standardization (x - mean) / sqrt(var + eps) with population
/// variance. `inv_std` receives 1 / sqrt(var + eps) for each row.
template <typename Derived>
MatrixX<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x,
                                                 VectorX<typename Derived::Scalar>* inv_std = nullptr,
                                                 double eps = kLayerNormEps) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  if (inv_std) inv_std->resize(x.rows());
  const Scalar d = Scalar(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).sum() / d;
    const auto centered = (x.row(i).array() - mean).matrix().eval();
    const Scalar var = centered.squaredNorm() / d;
    const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(eps));
    out.row(i) = centered * inv;
    if (inv_std) (*inv_std)(i) = inv;
  }
  return out;
}

/// Row-wise gamma * x + beta.
template <typename Derived, typename DerivedG, typename DerivedB>
MatrixX<typename Derived::Scalar> affine_rows(const Eigen::MatrixBase<Derived>& x,
                                              const Eigen::MatrixBase<DerivedG>& gamma,
                                              const Eigen::MatrixBase<DerivedB>& beta) {
  using Scalar = typename Derived::Scalar;
  const RowVectorX<Scalar> g = gamma.reshaped().transpose();
  const RowVectorX<Scalar> b = beta.reshaped().transpose();
  MatrixX<Scalar> out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = out.row(i).cwiseProduct(g) + b;
  return out;
}

/// Layer normalization applied to each row: gamma * normalize(x) + beta.
template <typename Derived, typename DerivedG, typename DerivedB>
MatrixX<typename Derived::Scalar> layer_norm_rows(const Eigen::MatrixBase<Derived>& x,
                                                  const Eigen::MatrixBase<DerivedG>& gamma,
                                                  const Eigen::MatrixBase<DerivedB>& beta) {
  if (x.cols() < 2 || gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw DimensionError("layer_norm: width " + std::to_string(x.cols()) + ", gamma " +
                         std::to_string(gamma.size()) + ", beta " + std::to_string(beta.size()));
  }
  return affine_rows(normalize_rows(x), gamma, beta);
}

/// Layer normalization of a single vector.
template <typename Scalar>
VectorX<Scalar> layer_norm(const VectorX<Scalar>& x, const VectorX<Scalar>& gamma, const VectorX<Scalar>& beta) {
  return layer_norm_rows(x.transpose(), gamma, beta).transpose();
}

template <typename Scalar>
struct ReducedSvd {
  MatrixX<Scalar> u;  ///< n x n, orthogonal
  VectorX<Scalar> s;  ///< n, descending, non-negative
  MatrixX<Scalar> v;  ///< m x n, orthonormal columns
  int sweeps = 0;
};

inline constexpr int kSvdMaxSweeps = 100;

namespace detail {

// Orthonormalizes column `col` of `v` against columns [0, col) with two
// Gram-Schmidt passes. Returns false if nothing is left after projection.
template <typename Scalar>
bool reorthonormalize_column(MatrixX<Scalar>& v, Eigen::Index col) {
  auto target = v.col(col);
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index k = 0; k < col; ++k) target -= v.col(k).dot(target) * v.col(k);
  }
  const Scalar norm = target.norm();
  if (norm < Scalar(0.5)) return false;
  target /= norm;
  return true;
}

} // namespace detail

/// Reduced SVD J = U diag(S) V^T of an n x m matrix with n <= m, by one-sided
/// (Hestenes) Jacobi rotations applied to the rows of J.
///
/// A pair of rows is rotated while |<w_p, w_q>| > max(1e-15, m eps) ||w_p|| ||w_q||; the
/// iteration stops after the first sweep with no rotation, or throws
/// NumericError after kSvdMaxSweeps sweeps. Columns of U are sign-normalized
/// so their largest-magnitude entry is positive. Right singular vectors for
/// (numerically) zero singular values are completed to an orthonormal set.
template <typename Derived>
ReducedSvd<typename Derived::Scalar> reduced_svd(const Eigen::MatrixBase<Derived>& j) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = j.rows();
  const Eigen::Index m = j.cols();
  if (n > m) {
    throw DimensionError("reduced_svd expects rows <= cols, got " + std::to_string(n) + "x" + std::to_string(m));
  }
  MatrixX<Scalar> w = j;
  MatrixX<Scalar> u = MatrixX<Scalar>::Identity(n, n);
  const Scalar frob2 = w.squaredNorm();
  // Rounding in a length-m dot product is ~m*eps relative; a tighter
  // threshold would never stop rotating.
  const Scalar rel_tol = std::max(Scalar(1e-15), Scalar(m) * std::numeric_limits<Scalar>::epsilon());

  ReducedSvd<Scalar> out;
  bool converged = frob2 == Scalar(0);
  Scalar max_off = 0;
  for (int sweep = 0; sweep < kSvdMaxSweeps && !converged; ++sweep) {
    bool rotated = false;
    max_off = 0;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar alpha = w.row(p).squaredNorm();
        const Scalar beta = w.row(q).squaredNorm();
        const Scalar gamma = w.row(p).dot(w.row(q));
        max_off = std::max(max_off, std::abs(gamma));
        if (gamma == Scalar(0) || std::abs(gamma) <= rel_tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) / (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        const RowVectorX<Scalar> wp = w.row(p);
        w.row(p) = c * wp - s * w.row(q);
        w.row(q) = s * wp + c * w.row(q);
        const VectorX<Scalar> up = u.col(p);
        u.col(p) = c * up - s * u.col(q);
        u.col(q) = s * up + c * u.col(q);
      }
    }
    out.sweeps = sweep + 1;
    converged = !rotated;
  }
  if (!converged) {
    throw NumericError("reduced_svd: no convergence after " + std::to_string(kSvdMaxSweeps) +
                           " sweeps; off-diagonal residual / ||J||_F^2 = " +
                           std::to_string(double(max_off / frob2)),
                       double(max_off / frob2));
  }

  VectorX<Scalar> norms = w.rowwise().norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

  out.s.resize(n);
  out.u.resize(n, n);
  out.v = MatrixX<Scalar>::Zero(m, n);
  const Scalar s_max = n > 0 ? norms(order[0]) : Scalar(0);
  const Scalar tiny = s_max * Scalar(m) * std::numeric_limits<Scalar>::epsilon();
  std::vector<Eigen::Index> incomplete;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index k = order[std::size_t(i)];
    out.s(i) = norms(k);
    out.u.col(i) = u.col(k);
    if (norms(k) > tiny && norms(k) > Scalar(0)) {
      out.v.col(i) = w.row(k).transpose() / norms(k);
    } else {
      incomplete.push_back(i);
    }
  }
  // Tiny singular values sort last and carry no reliable direction: rebuild
  // those right vectors as an orthonormal completion of the earlier columns.
  Eigen::Index probe = 0;
  for (Eigen::Index i : incomplete) {
    for (;; ++probe) {
      if (probe >= m) throw NumericError("reduced_svd: could not complete right singular basis", 0.0);
      out.v.col(i).setZero();
      out.v(probe, i) = Scalar(1);
      if (detail::reorthonormalize_column(out.v, i)) {
        ++probe;
        break;
      }
    }
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    out.u.col(i).cwiseAbs().maxCoeff(&arg);
    if (out.u(arg, i) < 0) {
      out.u.col(i) = -out.u.col(i);
      out.v.col(i) = -out.v.col(i);
    }
  }
  return out;
}

} // namespace atlas

#endif // ATLAS_LINALG_HPP
