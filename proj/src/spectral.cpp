#include "atlas/spectral.hpp"

#include <string>

namespace atlas {

namespace {

Eigen::Index resolve_rank(const JacobianSvd& svd, std::optional<Eigen::Index> rank_cut) {
  const Eigen::Index r = rank_cut.value_or(svd.effective_rank());
  if (r < 0 || r > svd.output_dim()) {
    throw PreconditionError("rank_cut " + std::to_string(r) + " outside [0, " + std::to_string(svd.output_dim()) + "]");
  }
  return r;
}

void check_direction(const JacobianSvd& svd, const Vector& v) {
  if (v.size() != svd.input_dim()) throw DimensionError("direction length does not match the Jacobian input dimension");
  if (!(v.norm() > 0.0)) throw DegenerateError("zero direction");
}

// Component of v in span(V_r), with a second pass to clean up rounding.
Vector normal_component(const Matrix& vr, const Vector& v) {
  Vector inside = vr * (vr.transpose() * v);
  const Vector rest = v - inside;
  inside += vr * (vr.transpose() * rest);
  return inside;
}

} // namespace

Eigen::Index JacobianSvd::effective_rank() const {
  if (s.size() == 0 || s(0) == 0.0) return 0;
  for (Eigen::Index r = 0; r < s.size(); ++r) {
    if (s(r) < kEffectiveRankCut * s(0)) return r;
  }
  return s.size();
}

Matrix jacobian_at(const Model& model, const Vector& x0) {
  if (x0.size() != model.input_dim()) throw DimensionError("jacobian_at: input size mismatch");
  return model.jacobian(x0);
}

SvdResiduals svd_residuals(const Matrix& jacobian, const JacobianSvd& svd) {
  SvdResiduals r;
  const double norm = jacobian.norm();
  const Matrix rebuilt = svd.u * svd.s.asDiagonal() * svd.v.transpose();
  r.reconstruction = norm > 0.0 ? (jacobian - rebuilt).norm() / norm : rebuilt.norm();
  const Eigen::Index n = svd.s.size();
  r.u_orthogonality = (svd.u.transpose() * svd.u - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
  r.v_orthogonality = (svd.v.transpose() * svd.v - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i + 1 < n; ++i) r.descending = r.descending && svd.s(i) >= svd.s(i + 1);
  if (n > 0) r.descending = r.descending && svd.s(n - 1) >= 0.0;
  return r;
}

JacobianSvd svd_analysis(const Matrix& jacobian, const Vector& x0) {
  if (jacobian.cols() != x0.size()) throw DimensionError("svd_analysis: anchor does not match Jacobian columns");
  auto factors = reduced_svd(jacobian);
  JacobianSvd svd;
  svd.u = std::move(factors.u);
  svd.s = std::move(factors.s);
  svd.v = std::move(factors.v);
  svd.sigma_max = svd.s.size() ? svd.s(0) : 0.0;
  svd.anchor = std::make_shared<const Vector>(x0);
  const SvdResiduals r = svd_residuals(jacobian, svd);
  if (!(r.reconstruction < kSvdResidualBound)) {
    throw NumericError("svd_analysis: reconstruction residual " + std::to_string(r.reconstruction), r.reconstruction);
  }
  return svd;
}

Vector project_null(const JacobianSvd& svd, const Vector& v, std::optional<Eigen::Index> rank_cut) {
  check_direction(svd, v);
  const Eigen::Index r = resolve_rank(svd, rank_cut);
  const Vector residual = v - normal_component(svd.v.leftCols(r), v);
  const double norm = residual.norm();
  if (norm < 1e-12 * v.norm()) throw DegenerateError("direction lies inside the normal space; null component vanishes");
  return residual / norm;
}

Vector project_normal(const JacobianSvd& svd, const Vector& v, std::optional<Eigen::Index> rank_cut) {
  check_direction(svd, v);
  const Eigen::Index r = resolve_rank(svd, rank_cut);
  const Vector inside = normal_component(svd.v.leftCols(r), v);
  const double norm = inside.norm();
  if (norm < 1e-12 * v.norm()) throw DegenerateError("direction lies inside the null space; normal component vanishes");
  return inside / norm;
}

double normal_energy_fraction(const JacobianSvd& svd, const Vector& v, std::optional<Eigen::Index> rank_cut) {
  check_direction(svd, v);
  const Eigen::Index r = resolve_rank(svd, rank_cut);
  return (svd.v.leftCols(r).transpose() * v).squaredNorm() / v.squaredNorm();
}

} // namespace atlas
