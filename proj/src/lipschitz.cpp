#include "atlas/lipschitz.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "atlas/parallel.hpp"

namespace atlas {

std::string to_string(DirectionFamily f) {
  switch (f) {
    case DirectionFamily::Singular: return "singular";
    case DirectionFamily::RandomGaussian: return "random_gaussian";
    case DirectionFamily::NullProjected: return "null_projected";
    case DirectionFamily::Optimized: return "optimized";
  }
  return "unknown";
}

std::vector<double> ldlc_grid(double epsilon, int grid_n) {
  std::vector<double> grid(static_cast<std::size_t>(grid_n));
  const int last = grid_n - 1;
  for (int k = 0; k < grid_n; ++k) grid[std::size_t(k)] = epsilon * double(2 * k - last) / double(last);
  return grid;
}

LdlcEstimate ldlc_estimate(const Model& model, const Vector& x0, const Vector& direction, double epsilon,
                           int grid_n) {
  if (direction.size() != x0.size() || x0.size() != model.input_dim()) throw DimensionError("ldlc: size mismatch");
  if (std::abs(direction.norm() - 1.0) > 1e-10) throw PreconditionError("ldlc: direction must have unit length");
  if (!(epsilon > 0.0)) throw PreconditionError("ldlc: epsilon must be positive");
  if (grid_n < 3 || grid_n % 2 == 0) throw PreconditionError("ldlc: grid_n must be odd and at least 3");

  const std::vector<double> grid = ldlc_grid(epsilon, grid_n);
  std::vector<Vector> values(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) values[k] = model(x0 + grid[k] * direction);

  const double min_gap = 2.0 * epsilon / double(grid_n - 1);
  LdlcEstimate est;
  est.direction = direction;
  est.epsilon = epsilon;
  est.n_samples = grid_n;
  est.argmax_alpha = grid[0];
  est.argmax_beta = grid[1];
  double best = -1.0;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t b = a + 1; b < grid.size(); ++b) {
      const double gap = grid[b] - grid[a];
      if (gap < min_gap * (1.0 - 1e-12)) continue;
      const double ratio = (values[b] - values[a]).norm() / gap;
      if (ratio > best) {
        best = ratio;
        est.argmax_alpha = grid[a];
        est.argmax_beta = grid[b];
      }
    }
  }
  est.value = best;
  return est;
}

DirectionSuite direction_suite(const JacobianSvd& svd, Rng& rng, const DirectionCounts& counts,
                               std::optional<Eigen::Index> rank_cut) {
  if (counts.singular < 0 || counts.random < 0 || counts.null < 0) throw PreconditionError("negative direction count");
  if (counts.singular > svd.output_dim()) throw PreconditionError("more singular directions requested than exist");
  DirectionSuite suite;
  for (int i = 0; i < counts.singular; ++i) {
    suite.directions.push_back({DirectionFamily::Singular, svd.v.col(i).normalized()});
  }
  for (int i = 0; i < counts.random; ++i) {
    suite.directions.push_back({DirectionFamily::RandomGaussian, gaussian_vector(rng, svd.input_dim()).normalized()});
  }
  for (int i = 0; i < counts.null; ++i) {
    try {
      suite.directions.push_back(
          {DirectionFamily::NullProjected, project_null(svd, gaussian_vector(rng, svd.input_dim()), rank_cut)});
    } catch (const DegenerateError&) {
      ++suite.skipped;
    }
  }
  return suite;
}

std::vector<FamilyDirection> optimized_directions(const Model& model, const Vector& x0,
                                                  const std::vector<Vector>& targets, const MatchConfig& config) {
  std::vector<FamilyDirection> out(targets.size());
  parallel_for(targets.size(), [&](std::size_t i) {
    const MatchResult run = match_embedding(model, x0, targets[i], config);
    const Vector step = run.x_star - x0;
    if (!(step.norm() > 0.0)) throw DegenerateError("optimized direction: matching run did not move the input");
    out[i] = {DirectionFamily::Optimized, step.normalized()};
  });
  return out;
}

LdlcSummary summarize(const std::vector<LdlcEstimate>& estimates) {
  LdlcSummary s;
  if (estimates.empty()) return s;
  std::vector<double> values;
  values.reserve(estimates.size());
  for (const auto& e : estimates) values.push_back(e.value);
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.min = values.front();
  s.max = values.back();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / double(n);

  constexpr double kBinsPerDecade = 4.0;
  auto bin_of = [&](double v) { return long(std::floor(kBinsPerDecade * std::log10(v))); };
  std::size_t zeros = 0;
  std::optional<long> lo, hi;
  for (double v : values) {
    if (v <= 0.0) {
      ++zeros;
      continue;
    }
    const long b = bin_of(v);
    lo = lo ? std::min(*lo, b) : b;
    hi = hi ? std::max(*hi, b) : b;
  }
  auto edge = [&](long k) { return std::pow(10.0, double(k) / kBinsPerDecade); };
  if (zeros) s.histogram.push_back({0.0, lo ? edge(*lo) : 0.0, zeros});
  if (lo) {
    for (long k = *lo; k <= *hi; ++k) s.histogram.push_back({edge(k), edge(k + 1), 0});
    const std::size_t offset = zeros ? 1 : 0;
    for (double v : values) {
      if (v > 0.0) ++s.histogram[offset + std::size_t(bin_of(v) - *lo)].count;
    }
  }
  return s;
}

std::vector<LdlcDistribution> ldlc_distribution(const Model& model, const Vector& x0,
                                                const std::vector<FamilyDirection>& directions, double epsilon,
                                                int grid_n) {
  std::vector<LdlcEstimate> estimates(directions.size());
  parallel_for(directions.size(), [&](std::size_t i) {
    estimates[i] = ldlc_estimate(model, x0, directions[i].direction, epsilon, grid_n);
  });
  std::vector<LdlcDistribution> out;
  for (DirectionFamily family : {DirectionFamily::Singular, DirectionFamily::RandomGaussian,
                                 DirectionFamily::NullProjected, DirectionFamily::Optimized}) {
    LdlcDistribution dist;
    dist.family = family;
    for (std::size_t i = 0; i < directions.size(); ++i) {
      if (directions[i].family == family) dist.estimates.push_back(estimates[i]);
    }
    if (dist.estimates.empty()) continue;
    dist.summary = summarize(dist.estimates);
    out.push_back(std::move(dist));
  }
  return out;
}

void write_ldlc_report_csv(std::ostream& out, const std::vector<LdlcDistribution>& dists) {
  out << "family,direction_index,epsilon,value,argmax_alpha,argmax_beta\n";
  for (const auto& d : dists) {
    for (std::size_t i = 0; i < d.estimates.size(); ++i) {
      const LdlcEstimate& e = d.estimates[i];
      out << to_string(d.family) << ',' << i << ',' << format_double(e.epsilon) << ',' << format_double(e.value)
          << ',' << format_double(e.argmax_alpha) << ',' << format_double(e.argmax_beta) << '\n';
    }
  }
}

void write_ldlc_hist_csv(std::ostream& out, const std::vector<LdlcDistribution>& dists) {
  out << "family,bin_lo,bin_hi,count\n";
  for (const auto& d : dists) {
    for (const auto& b : d.summary.histogram) {
      out << to_string(d.family) << ',' << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count << '\n';
    }
  }
}

} // namespace atlas
