#include "atlas/paths.hpp"

#include <cstdio>
#include <ostream>

#include "atlas/images.hpp"
#include "atlas/matcher.hpp"
#include "atlas/metrics.hpp"
#include "atlas/parallel.hpp"
#include "atlas/spectral.hpp"

namespace atlas {

Vector path_point(const Vector& xa, const Vector& xb, int k, int steps) {
  const double wa = double(steps - k) / double(steps);
  const double wb = double(k) / double(steps);
  return (wa * xa.array() + wb * xb.array()).matrix();
}

PathTrace interpolate_trace(const Model& model, const Vector& xa, const Vector& xb, int steps) {
  if (xa.size() != xb.size() || xa.size() != model.input_dim()) throw DimensionError("interpolate: size mismatch");
  if (steps < 2) throw PreconditionError("interpolate: steps must be at least 2");
  const Vector fa = model(xa);
  const Vector fb = model(xb);
  PathTrace trace;
  trace.points.resize(std::size_t(steps) + 1);
  parallel_for(trace.points.size(), [&](std::size_t i) {
    const int k = int(i);
    const Vector x = path_point(xa, xb, k, steps);
    const Vector fx = model(x);
    PathPoint& p = trace.points[i];
    p.t = double(k) / double(steps);
    p.cos_to_a = cosine_similarity(fx, fa);
    p.cos_to_b = cosine_similarity(fx, fb);
    p.dist_a = (fx - fa).norm();
    p.dist_b = (fx - fb).norm();
    p.mean_abs_delta = (x - xa).cwiseAbs().mean();
  });
  return trace;
}

void write_path_csv(std::ostream& out, const PathTrace& trace) {
  out << "t,cos_to_a,cos_to_b,dist_a,dist_b,mean_abs_delta\n";
  for (const auto& p : trace.points) {
    out << format_double(p.t) << ',' << format_double(p.cos_to_a) << ',' << format_double(p.cos_to_b) << ','
        << format_double(p.dist_a) << ',' << format_double(p.dist_b) << ',' << format_double(p.mean_abs_delta)
        << '\n';
  }
}

std::vector<std::filesystem::path> write_path_frames(const std::filesystem::path& dir, const Vector& xa,
                                                     const Vector& xb, int steps, const VitConfig& config) {
  if (steps < 2) throw PreconditionError("frames: steps must be at least 2");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  for (int k = 0; k <= steps; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03d.ppm", k);
    files.push_back(dir / name);
    save_image(input_to_image(path_point(xa, xb, k, steps), config), files.back());
  }
  return files;
}

WalkTrace null_walk(const Model& model, const Vector& x0, double step_len, int n_steps,
                    std::optional<Eigen::Index> rank_cut, Rng& rng, double drift_cap, WalkMode mode) {
  if (x0.size() != model.input_dim()) throw DimensionError("null_walk: input size mismatch");
  if (!(step_len > 0.0)) throw PreconditionError("null_walk: step_len must be positive");
  if (!(drift_cap > 0.0)) throw PreconditionError("null_walk: drift_cap must be positive");
  if (n_steps < 0) throw PreconditionError("null_walk: n_steps must be non-negative");

  const Vector f0 = model(x0);
  WalkTrace trace;
  trace.points.push_back({0, x0, 0.0, 0.0, 0, false});

  MatchConfig correction;
  correction.learning_rate = kCorrectionLearningRate;
  correction.max_iters = kCorrectionMaxIters;
  correction.cos_tol = std::nullopt;
  correction.loss_tol = 0.5 * (0.5 * drift_cap) * (0.5 * drift_cap);

  Vector x = x0;
  Vector previous_dir;
  for (int k = 1; k <= n_steps; ++k) {
    const JacobianSvd svd = svd_analysis(jacobian_at(model, x), x);
    std::optional<Vector> dir;
    if (mode == WalkMode::Straight && previous_dir.size() > 0) {
      try {
        dir = project_null(svd, previous_dir, rank_cut);
      } catch (const DegenerateError&) {
      }
    }
    for (int attempt = 0; !dir && attempt <= kWalkMaxResamples; ++attempt) {
      try {
        dir = project_null(svd, gaussian_vector(rng, x.size()), rank_cut);
      } catch (const DegenerateError&) {
        ++trace.resamples;
      }
    }
    if (!dir) throw WalkStepError("null_walk: no usable null direction at step " + std::to_string(k), k);
    previous_dir = *dir;

    const Vector raw = x + step_len * *dir;
    x = raw.cwiseMax(0.0).cwiseMin(1.0);
    const bool clamped = (x.array() != raw.array()).any();

    double drift = (model(x) - f0).norm();
    if (drift > drift_cap) {
      x = match_embedding(model, x, f0, correction).x_star;
      drift = (model(x) - f0).norm();
      ++trace.reprojections;
    }
    trace.points.push_back({k, x, (x - x0).norm(), drift, trace.reprojections, clamped});
  }
  return trace;
}

void write_walk_csv(std::ostream& out, const WalkTrace& trace) {
  out << "k,input_disp,embed_drift,reprojections\n";
  for (const auto& p : trace.points) {
    out << p.k << ',' << format_double(p.input_disp) << ',' << format_double(p.embed_drift) << ','
        << p.reprojections << '\n';
  }
}

} // namespace atlas
