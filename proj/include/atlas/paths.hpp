#ifndef ATLAS_PATHS_HPP
#define ATLAS_PATHS_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "atlas/autodiff.hpp"
#include "atlas/random.hpp"
#include "atlas/vit.hpp"

namespace atlas {

struct PathPoint {
  double t = 0.0;
  double cos_to_a = 0.0;
  double cos_to_b = 0.0;
  double dist_a = 0.0;
  double dist_b = 0.0;
  double mean_abs_delta = 0.0;  ///< mean |x(t) - x(0)|
};

struct PathTrace {
  std::vector<PathPoint> points;  ///< steps + 1 entries, t uniform on [0, 1]
};

/// Point k of the straight path from xa to xb with `steps` segments. The
/// weights (steps - k)/steps and k/steps are formed separately, so the path
/// is exactly symmetric under swapping endpoints and hits xb exactly at k =
/// steps.
Vector path_point(const Vector& xa, const Vector& xb, int k, int steps);

/// Embeddings along the straight path; evaluations run concurrently.
PathTrace interpolate_trace(const Model& model, const Vector& xa, const Vector& xb, int steps);

void write_path_csv(std::ostream& out, const PathTrace& trace);

/// Writes frame_000.ppm ... for every path point. Returns the files written.
std::vector<std::filesystem::path> write_path_frames(const std::filesystem::path& dir, const Vector& xa,
                                                     const Vector& xb, int steps, const VitConfig& config);

enum class WalkMode {
  Random,    ///< fresh Gaussian direction each step
  Straight,  ///< previous direction re-projected onto the new null space
};

struct WalkPoint {
  int k = 0;
  Vector x;
  double input_disp = 0.0;   ///< |x_k - x_0|
  double embed_drift = 0.0;  ///< |f(x_k) - f(x_0)|
  int reprojections = 0;     ///< corrections so far
  bool clamped = false;      ///< the step into x_k touched the [0,1] box
};

struct WalkTrace {
  std::vector<WalkPoint> points;  ///< n_steps + 1 entries
  int reprojections = 0;
  int resamples = 0;  ///< degenerate null projections that were redrawn
};

/// Null projection failed on every redraw at step `step`.
class WalkStepError : public DegenerateError {
public:
  WalkStepError(const std::string& what, int step) : DegenerateError(what), step_(step) {}
  int step() const noexcept { return step_; }

private:
  int step_;
};

inline constexpr int kWalkMaxResamples = 10;
inline constexpr int kCorrectionMaxIters = 200;
inline constexpr double kCorrectionLearningRate = 0.01;

/// Walk x_{k+1} = clamp(x_k + step_len d_k, 0, 1) with d_k a unit vector in
/// the null space of the Jacobian at x_k (recomputed every step). When the
/// drift from f(x_0) exceeds drift_cap, a bounded matching run pulls the
/// embedding back toward f(x_0) until the drift is at most drift_cap / 2 or
/// the iteration bound is hit.
WalkTrace null_walk(const Model& model, const Vector& x0, double step_len, int n_steps,
                    std::optional<Eigen::Index> rank_cut, Rng& rng, double drift_cap,
                    WalkMode mode = WalkMode::Random);

void write_walk_csv(std::ostream& out, const WalkTrace& trace);

} // namespace atlas

#endif // ATLAS_PATHS_HPP
