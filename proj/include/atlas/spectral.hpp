#ifndef ATLAS_SPECTRAL_HPP
#define ATLAS_SPECTRAL_HPP

#include <memory>
#include <optional>

#include "atlas/autodiff.hpp"
#include "atlas/linalg.hpp"

namespace atlas {

inline constexpr double kEffectiveRankCut = 1e-10;
inline constexpr double kSvdResidualBound = 1e-10;

/// Reduced SVD of the embedding Jacobian at an anchor input. Right singular
/// vectors span the normal space; their complement is the null space.
struct JacobianSvd {
  Matrix u;  ///< n x n
  Vector s;  ///< descending
  Matrix v;  ///< m x n
  double sigma_max = 0.0;
  std::shared_ptr<const Vector> anchor;

  Eigen::Index output_dim() const { return s.size(); }
  Eigen::Index input_dim() const { return v.rows(); }

  /// Smallest r with s[r] < 1e-10 * s[0] (n if there is none, 0 for J = 0).
  Eigen::Index effective_rank() const;
};

/// Exact Jacobian of the model at x0 (n x m).
Matrix jacobian_at(const Model& model, const Vector& x0);

/// Reduced SVD with the reconstruction bound verified; throws NumericError
/// if ||U S V^T - J||_F / ||J||_F >= 1e-10.
JacobianSvd svd_analysis(const Matrix& jacobian, const Vector& x0);

struct SvdResiduals {
  double reconstruction = 0.0;  ///< ||J - U S V^T||_F / ||J||_F
  double u_orthogonality = 0.0; ///< max |U^T U - I|
  double v_orthogonality = 0.0; ///< max |V^T V - I|
  bool descending = true;
};
SvdResiduals svd_residuals(const Matrix& jacobian, const JacobianSvd& svd);

/// Unit-length component of v orthogonal to the leading `rank_cut` right
/// singular vectors (default: effective rank). Throws DegenerateError if the
/// residual norm is below 1e-12 ||v||.
Vector project_null(const JacobianSvd& svd, const Vector& v, std::optional<Eigen::Index> rank_cut = std::nullopt);

/// Unit-length component of v inside the span of the leading `rank_cut` right
/// singular vectors.
Vector project_normal(const JacobianSvd& svd, const Vector& v, std::optional<Eigen::Index> rank_cut = std::nullopt);

/// ||V_r^T v||^2 / ||v||^2: share of v's energy in the normal space.
double normal_energy_fraction(const JacobianSvd& svd, const Vector& v,
                              std::optional<Eigen::Index> rank_cut = std::nullopt);

} // namespace atlas

#endif // ATLAS_SPECTRAL_HPP
