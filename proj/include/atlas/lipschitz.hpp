#ifndef ATLAS_LIPSCHITZ_HPP
#define ATLAS_LIPSCHITZ_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atlas/autodiff.hpp"
#include "atlas/matcher.hpp"
#include "atlas/random.hpp"
#include "atlas/spectral.hpp"

namespace atlas {

inline constexpr double kDefaultLdlcEpsilon = 1e-3;
inline constexpr int kDefaultLdlcGrid = 21;

enum class DirectionFamily { Singular, RandomGaussian, NullProjected, Optimized };
std::string to_string(DirectionFamily f);

/// Local directional Lipschitz estimate along a unit direction.
struct LdlcEstimate {
  Vector direction;
  double epsilon = 0.0;
  double value = 0.0;
  double argmax_alpha = 0.0;
  double argmax_beta = 0.0;
  int n_samples = 0;  ///< grid points (model evaluations)
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct LdlcSummary {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::vector<HistogramBin> histogram;  ///< log10-spaced, 4 bins per decade
};

struct LdlcDistribution {
  DirectionFamily family = DirectionFamily::RandomGaussian;
  std::vector<LdlcEstimate> estimates;
  LdlcSummary summary;
};

/// Largest ||f(x0 + b d) - f(x0 + a d)|| / |b - a| over all pairs a != b of a
/// uniform odd grid of `grid_n` points on [-epsilon, epsilon]. Pairs closer
/// than one grid spacing are never formed, which keeps the ratio away from
/// cancellation noise. Costs grid_n model evaluations.
LdlcEstimate ldlc_estimate(const Model& model, const Vector& x0, const Vector& direction,
                           double epsilon = kDefaultLdlcEpsilon, int grid_n = kDefaultLdlcGrid);

/// Grid points t_k = epsilon (2k - (n-1)) / (n-1); exactly symmetric about 0
/// and nested under n -> 2n - 1.
std::vector<double> ldlc_grid(double epsilon, int grid_n);

struct FamilyDirection {
  DirectionFamily family;
  Vector direction;
};

struct DirectionCounts {
  int singular = 0;
  int random = 0;
  int null = 0;
};

struct DirectionSuite {
  std::vector<FamilyDirection> directions;
  int skipped = 0;  ///< null-projected draws dropped as degenerate
};

/// Leading right singular vectors, normalized Gaussian directions, and
/// Gaussian directions projected onto the null space, in that order.
DirectionSuite direction_suite(const JacobianSvd& svd, Rng& rng, const DirectionCounts& counts,
                               std::optional<Eigen::Index> rank_cut = std::nullopt);

/// Normalized displacement x_star - x0 of one matching run per target.
std::vector<FamilyDirection> optimized_directions(const Model& model, const Vector& x0,
                                                  const std::vector<Vector>& targets, const MatchConfig& config);

LdlcSummary summarize(const std::vector<LdlcEstimate>& estimates);

/// One distribution per family present in `directions`, in family enum
/// order; estimates keep their input order within a family.
std::vector<LdlcDistribution> ldlc_distribution(const Model& model, const Vector& x0,
                                                const std::vector<FamilyDirection>& directions,
                                                double epsilon = kDefaultLdlcEpsilon,
                                                int grid_n = kDefaultLdlcGrid);

/// family, direction_index, epsilon, value, argmax_alpha, argmax_beta
void write_ldlc_report_csv(std::ostream& out, const std::vector<LdlcDistribution>& dists);

/// family, bin_lo, bin_hi, count
void write_ldlc_hist_csv(std::ostream& out, const std::vector<LdlcDistribution>& dists);

} // namespace atlas

#endif // ATLAS_LIPSCHITZ_HPP
