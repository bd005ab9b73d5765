#ifndef ATLAS_MATCHER_HPP
#define ATLAS_MATCHER_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atlas/autodiff.hpp"

namespace atlas {

struct MatchConfig {
  double learning_rate = 0.05;
  int max_iters = 5000;
  std::optional<double> loss_tol;          ///< stop when 0.5 |f(x) - t|^2 <= loss_tol
  std::optional<double> cos_tol = 0.99;    ///< stop when cos(f(x), t) >= cos_tol
  std::optional<double> perturb_budget;    ///< max mean |x - x0| per pixel
  int record_every = 1;

  /// Throws ConfigError unless lr > 0, max_iters >= 1, record_every >= 1 and
  /// at least one of loss_tol / cos_tol is enabled.
  void validate() const;
};

enum class StopReason { LossTolerance, CosineTolerance, PerturbBudget, MaxIterations };
std::string to_string(StopReason r);

struct MatchStep {
  int iter = 0;
  double loss = 0.0;
  double cosine = 0.0;
  double mean_abs_delta = 0.0;
  double max_abs_delta = 0.0;
  bool clamped = false;  ///< the step that produced this iterate hit the [0,1] box
};

struct MatchTrace {
  std::vector<MatchStep> steps;
  bool converged = false;
  StopReason reason = StopReason::MaxIterations;
  int iterations = 0;     ///< gradient steps taken
  int clamp_events = 0;   ///< steps where at least one pixel was clamped
};

struct MatchResult {
  Vector x_star;
  MatchTrace trace;
};

/// Thrown when the loss becomes non-finite; carries the trace up to the last
/// finite step.
class DivergenceError : public NumericError {
public:
  DivergenceError(const std::string& what, MatchTrace trace)
      : NumericError(what, 0.0), trace_(std::move(trace)) {}
  const MatchTrace& trace() const noexcept { return trace_; }

private:
  MatchTrace trace_;
};

/// 0.5 |f(x) - target|^2
double match_loss(const Model& model, const Vector& x, const Vector& target);

/// (df/dx)^T (f(x) - target), as one reverse pass at x.
Vector match_gradient(const Model& model, const Vector& x, const Vector& target);

/// Projected gradient descent x <- clamp(x - lr * grad, 0, 1) from x0 until
/// the embedding matches `target` (see MatchConfig for stopping rules). A
/// budget breach stops the run and returns the last iterate inside budget.
MatchResult match_embedding(const Model& model, const Vector& x0, const Vector& target, const MatchConfig& config);

struct PerturbationReport {
  double mean_abs = 0.0;
  double max_abs = 0.0;
  double linf = 0.0;
  Vector diff_image;  ///< clamp(0.5 + scale * (x_star - x0), 0, 1)
};

inline constexpr double kDiffVisualScale = 50.0;

PerturbationReport perturbation_report(const Vector& x0, const Vector& x_star, double scale = kDiffVisualScale);

/// iter, loss, cosine, mean_abs_delta, max_abs_delta
void write_match_trace_csv(std::ostream& out, const MatchTrace& trace);

} // namespace atlas

#endif // ATLAS_MATCHER_HPP
