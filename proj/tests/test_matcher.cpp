#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "atlas/matcher.hpp"
#include "atlas/metrics.hpp"
#include "support.hpp"

using namespace atlas;
using atlas::testing::max_abs;
using atlas::testing::tiny_config;
using atlas::testing::uniform_vector;

namespace {

LinearModel random_linear(std::uint64_t seed, Eigen::Index n, Eigen::Index m) {
  Rng rng(seed);
  return LinearModel(gaussian_matrix(rng, n, m) / std::sqrt(double(m)));
}

} // namespace

TEST(Cosine, KnownValuesAndErrors) {
  const Vector u = (Vector(2) << 1.0, 1.0).finished();
  const Vector v = (Vector(2) << 1.0, 0.0).finished();
  EXPECT_NEAR(cosine_similarity(u, v), 0.70710678, 1e-8);
  EXPECT_DOUBLE_EQ(cosine_similarity(u, u), 1.0);
  EXPECT_EQ(cosine_similarity(v, (Vector(2) << 0.0, 3.0).finished()), 0.0);
  EXPECT_THROW(cosine_similarity(u, Vector::Zero(2)), DegenerateError);
  EXPECT_THROW(cosine_similarity(u, Vector::Ones(3)), DimensionError);
}

TEST(MatchGradient, EqualsExplicitJacobianTransposeResidual) {
  const VitConfig c = tiny_config();
  Rng rng(31);
  VitModel model(c, init_weights(c, rng));
  for (int k = 0; k < 5; ++k) {
    const Vector x = uniform_vector(rng, c.input_dim());
    const Vector t = model(uniform_vector(rng, c.input_dim()));
    const Vector explicit_grad = model.jacobian(x).transpose() * (model(x) - t);
    EXPECT_LT(max_abs(match_gradient(model, x, t) - explicit_grad), 1e-12);
  }
}

TEST(MatchGradient, LinearClosedForm) {
  const LinearModel model = random_linear(1, 3, 10);
  Rng rng(2);
  const Vector x = gaussian_vector(rng, 10), t = gaussian_vector(rng, 3);
  const Matrix& a = model.matrix();
  EXPECT_LT(max_abs(match_gradient(model, x, t) - a.transpose() * (a * x - t)), 1e-14);
  EXPECT_NEAR(match_loss(model, x, t), 0.5 * (a * x - t).squaredNorm(), 1e-14);
  EXPECT_THROW(match_gradient(model, Vector::Zero(4), t), DimensionError);
  EXPECT_THROW(match_gradient(model, x, Vector::Zero(4)), DimensionError);
}

TEST(MatchEmbedding, LossNeverIncreasesWithoutClamping) {
  const LinearModel model = random_linear(3, 4, 50);
  Rng rng(4);
  const Vector x0 = uniform_vector(rng, 50, 0.3, 0.7);
  const Vector target = model(uniform_vector(rng, 50, 0.3, 0.7));
  MatchConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.cos_tol = 0.9999;
  const MatchResult r = match_embedding(model, x0, target, cfg);
  EXPECT_TRUE(r.trace.converged);
  EXPECT_EQ(r.trace.reason, StopReason::CosineTolerance);
  for (std::size_t i = 1; i < r.trace.steps.size(); ++i) {
    if (!r.trace.steps[i].clamped) {
      EXPECT_LE(r.trace.steps[i].loss, r.trace.steps[i - 1].loss);
    }
  }
  EXPECT_EQ(r.trace.steps.back().iter, r.trace.iterations);
  EXPECT_GE(r.trace.steps.back().cosine, 0.9999);
}

TEST(MatchEmbedding, StopsImmediatelyWhenAlreadyMatched) {
  const LinearModel model = random_linear(5, 3, 20);
  Rng rng(6);
  const Vector x0 = uniform_vector(rng, 20);
  const MatchResult r = match_embedding(model, x0, model(x0), MatchConfig{});
  EXPECT_EQ(r.trace.iterations, 0);
  EXPECT_EQ(r.x_star, x0);
  EXPECT_TRUE(r.trace.converged);
}

TEST(MatchEmbedding, LossToleranceAndIterationCap) {
  const LinearModel model = random_linear(7, 3, 30);
  Rng rng(8);
  const Vector x0 = uniform_vector(rng, 30, 0.3, 0.7);
  const Vector target = model(uniform_vector(rng, 30, 0.3, 0.7));
  MatchConfig cfg;
  cfg.cos_tol = std::nullopt;
  cfg.loss_tol = 1e-8;
  cfg.learning_rate = 0.5;
  const MatchResult ok = match_embedding(model, x0, target, cfg);
  EXPECT_EQ(ok.trace.reason, StopReason::LossTolerance);
  EXPECT_LE(match_loss(model, ok.x_star, target), 1e-8);

  cfg.loss_tol = 0.0;
  cfg.max_iters = 7;
  cfg.record_every = 3;
  const MatchResult capped = match_embedding(model, x0, target, cfg);
  EXPECT_EQ(capped.trace.reason, StopReason::MaxIterations);
  EXPECT_FALSE(capped.trace.converged);
  EXPECT_EQ(capped.trace.iterations, 7);
  std::vector<int> iters;
  for (const auto& s : capped.trace.steps) iters.push_back(s.iter);
  EXPECT_EQ(iters, (std::vector<int>{0, 3, 6, 7}));
}

TEST(MatchEmbedding, BudgetBreachRollsBack) {
  const VitConfig c = tiny_config();
  Rng rng(9);
  VitModel model(c, init_weights(c, rng));
  const Vector x0 = uniform_vector(rng, c.input_dim(), 0.2, 0.8);
  const Vector target = model(uniform_vector(rng, c.input_dim(), 0.2, 0.8));
  MatchConfig cfg;
  cfg.cos_tol = 0.999999;
  cfg.perturb_budget = 1e-3;
  const MatchResult r = match_embedding(model, x0, target, cfg);
  EXPECT_EQ(r.trace.reason, StopReason::PerturbBudget);
  EXPECT_FALSE(r.trace.converged);
  EXPECT_LE((r.x_star - x0).cwiseAbs().mean(), 1e-3);
  EXPECT_EQ(r.trace.steps.back().iter, r.trace.iterations);
  EXPECT_LE(r.trace.steps.back().mean_abs_delta, 1e-3);
}

TEST(MatchEmbedding, ClampsToUnitBoxAndCountsIt) {
  Matrix a = Matrix::Zero(1, 4);
  a(0, 0) = 1.0;
  LinearModel model(a);
  const Vector x0 = Vector::Constant(4, 0.95);
  MatchConfig cfg;
  cfg.cos_tol = std::nullopt;
  cfg.loss_tol = 0.0;
  cfg.max_iters = 5;
  const MatchResult r = match_embedding(model, x0, Vector::Constant(1, 3.0), cfg);
  EXPECT_EQ(r.x_star[0], 1.0);
  EXPECT_GT(r.trace.clamp_events, 0);
  EXPECT_GE(r.x_star.minCoeff(), 0.0);
}

TEST(MatchEmbedding, NonFiniteLossIsDivergence) {
  auto fn = [](auto& g, auto x) { return g.scale(g.scale(x, 1e300), 1e300); };
  auto model = make_model(fn, 3, 3);
  MatchConfig cfg;
  try {
    match_embedding(model, Vector::Constant(3, 0.5), Vector::Ones(3), cfg);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_TRUE(e.trace().steps.empty());
  }
}

TEST(MatchConfig, Validation) {
  MatchConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MatchConfig{};
  c.cos_tol = std::nullopt;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MatchConfig{};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MatchConfig{};
  c.perturb_budget = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Perturbation, ReportAndTraceCsv) {
  const Vector x0 = (Vector(4) << 0.5, 0.5, 0.5, 0.5).finished();
  const Vector xs = (Vector(4) << 0.51, 0.49, 0.5, 0.6).finished();
  const PerturbationReport r = perturbation_report(x0, xs);
  EXPECT_NEAR(r.mean_abs, 0.03, 1e-12);
  EXPECT_NEAR(r.max_abs, 0.1, 1e-12);
  EXPECT_NEAR(r.diff_image[0], 1.0, 1e-12);
  EXPECT_NEAR(r.diff_image[1], 0.0, 1e-12);
  EXPECT_EQ(r.diff_image[2], 0.5);
  EXPECT_EQ(r.diff_image[3], 1.0);

  MatchTrace t;
  t.steps.push_back({0, 1.5, 0.25, 0.0, 0.0, false});
  std::ostringstream s;
  write_match_trace_csv(s, t);
  EXPECT_EQ(s.str(), "iter,loss,cosine,mean_abs_delta,max_abs_delta\n0,1.5,0.25,0,0\n");
}
