#include "atlas/matcher.hpp"

#include <cmath>
#include <ostream>

#include "atlas/metrics.hpp"

namespace atlas {

namespace {

void check_shapes(const Model& model, const Vector& x, const Vector& target) {
  if (x.size() != model.input_dim()) throw DimensionError("match: input size mismatch");
  if (target.size() != model.output_dim()) throw DimensionError("match: target embedding size mismatch");
}

} // namespace

void MatchConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (record_every < 1) throw ConfigError("record_every must be at least 1");
  if (!loss_tol && !cos_tol) throw ConfigError("loss_tol and cos_tol cannot both be disabled");
  if (perturb_budget && !(*perturb_budget > 0.0)) throw ConfigError("perturb_budget must be positive");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::LossTolerance: return "loss_tol";
    case StopReason::CosineTolerance: return "cos_tol";
    case StopReason::PerturbBudget: return "perturb_budget";
    case StopReason::MaxIterations: return "max_iters";
  }
  return "unknown";
}

double match_loss(const Model& model, const Vector& x, const Vector& target) {
  check_shapes(model, x, target);
  return 0.5 * (model(x) - target).squaredNorm();
}

Vector match_gradient(const Model& model, const Vector& x, const Vector& target) {
  check_shapes(model, x, target);
  const Tape tape = model.record(x);
  return vjp(tape, flatten(tape.output()) - target);
}

MatchResult match_embedding(const Model& model, const Vector& x0, const Vector& target, const MatchConfig& config) {
  config.validate();
  check_shapes(model, x0, target);

  MatchResult result{x0, {}};
  MatchTrace& trace = result.trace;
  Vector x = x0;
  Vector previous = x0;
  bool last_clamped = false;
  for (int it = 0;; ++it) {
    const Tape tape = model.record(x);
    const Vector fx = flatten(tape.output());
    const Vector residual = fx - target;

    MatchStep step;
    step.iter = it;
    step.loss = 0.5 * residual.squaredNorm();
    step.cosine = cosine_similarity(fx, target);
    const Vector delta = (x - x0).cwiseAbs();
    step.mean_abs_delta = delta.mean();
    step.max_abs_delta = delta.maxCoeff();
    step.clamped = last_clamped;

    if (!std::isfinite(step.loss)) {
      throw DivergenceError("match_embedding: loss became non-finite at iteration " + std::to_string(it), trace);
    }

    std::optional<StopReason> stop;
    if (config.perturb_budget && step.mean_abs_delta > *config.perturb_budget) {
      stop = StopReason::PerturbBudget;
    } else if (config.loss_tol && step.loss <= *config.loss_tol) {
      stop = StopReason::LossTolerance;
    } else if (config.cos_tol && step.cosine >= *config.cos_tol) {
      stop = StopReason::CosineTolerance;
    } else if (it >= config.max_iters) {
      stop = StopReason::MaxIterations;
    }

    if (stop == StopReason::PerturbBudget) {
      // Roll back to the last iterate that respected the budget; it is
      // already the final recorded step unless it was skipped by
      // record_every.
      result.x_star = previous;
      trace.iterations = it - 1;
      trace.reason = *stop;
      trace.converged = false;
      if (it > 0 && (trace.steps.empty() || trace.steps.back().iter != it - 1)) {
        MatchStep back;
        back.iter = it - 1;
        const Vector fprev = model(previous);
        back.loss = 0.5 * (fprev - target).squaredNorm();
        back.cosine = cosine_similarity(fprev, target);
        const Vector d = (previous - x0).cwiseAbs();
        back.mean_abs_delta = d.mean();
        back.max_abs_delta = d.maxCoeff();
        trace.steps.push_back(back);
      }
      return result;
    }

    if (stop || it % config.record_every == 0) trace.steps.push_back(step);
    if (stop) {
      result.x_star = x;
      trace.iterations = it;
      trace.reason = *stop;
      trace.converged = *stop == StopReason::LossTolerance || *stop == StopReason::CosineTolerance;
      return result;
    }

    const Vector grad = vjp(tape, residual);
    previous = x;
    const Vector raw = x - config.learning_rate * grad;
    x = raw.cwiseMax(0.0).cwiseMin(1.0);
    last_clamped = (x.array() != raw.array()).any();
    if (last_clamped) ++trace.clamp_events;
  }
}

PerturbationReport perturbation_report(const Vector& x0, const Vector& x_star, double scale) {
  if (x0.size() != x_star.size()) throw DimensionError("perturbation_report: size mismatch");
  PerturbationReport r;
  const Vector diff = x_star - x0;
  if (diff.size() > 0) {
    r.mean_abs = diff.cwiseAbs().mean();
    r.max_abs = diff.cwiseAbs().maxCoeff();
  }
  r.linf = r.max_abs;
  r.diff_image = (0.5 + scale * diff.array()).cwiseMax(0.0).cwiseMin(1.0).matrix();
  return r;
}

void write_match_trace_csv(std::ostream& out, const MatchTrace& trace) {
  out << "iter,loss,cosine,mean_abs_delta,max_abs_delta\n";
  for (const auto& s : trace.steps) {
    out << s.iter << ',' << format_double(s.loss) << ',' << format_double(s.cosine) << ','
        << format_double(s.mean_abs_delta) << ',' << format_double(s.max_abs_delta) << '\n';
  }
}

} // namespace atlas
