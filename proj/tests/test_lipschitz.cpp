#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "atlas/lipschitz.hpp"
#include "support.hpp"

using namespace atlas;
using atlas::testing::tiny_config;
using atlas::testing::uniform_vector;

namespace {

LdlcEstimate fake(double v) {
  LdlcEstimate e;
  e.value = v;
  return e;
}

} // namespace

TEST(LdlcGrid, SymmetricAndNested) {
  for (int n : {3, 5, 21, 41}) {
    const auto g = ldlc_grid(1e-3, n);
    ASSERT_EQ(int(g.size()), n);
    EXPECT_EQ(g.front(), -1e-3);
    EXPECT_EQ(g.back(), 1e-3);
    EXPECT_EQ(g[std::size_t(n / 2)], 0.0);
    for (int k = 0; k < n; ++k) EXPECT_EQ(g[std::size_t(k)], -g[std::size_t(n - 1 - k)]);
    const auto fine = ldlc_grid(1e-3, 2 * n - 1);
    for (int k = 0; k < n; ++k) EXPECT_EQ(g[std::size_t(k)], fine[std::size_t(2 * k)]);
  }
}

TEST(Ldlc, LinearMapGivesNormOfImage) {
  Rng rng(1);
  LinearModel model(gaussian_matrix(rng, 4, 30));
  const Vector x0 = gaussian_vector(rng, 30);
  for (int k = 0; k < 10; ++k) {
    const Vector d = gaussian_vector(rng, 30).normalized();
    const LdlcEstimate e = ldlc_estimate(model, x0, d);
    EXPECT_NEAR(e.value, (model.matrix() * d).norm(), 1e-9 * (model.matrix() * d).norm());
    EXPECT_EQ(e.n_samples, kDefaultLdlcGrid);
    EXPECT_EQ(e.epsilon, kDefaultLdlcEpsilon);
    EXPECT_LT(e.argmax_alpha, e.argmax_beta);
  }
}

TEST(Ldlc, SingularDirectionsRecoverSingularValuesOnLinearMap) {
  Rng rng(2);
  LinearModel model(gaussian_matrix(rng, 5, 40));
  const Vector x0 = gaussian_vector(rng, 40);
  const JacobianSvd svd = svd_analysis(jacobian_at(model, x0), x0);
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(ldlc_estimate(model, x0, svd.v.col(i)).value, svd.s[i], 1e-9 * svd.s[0]);
  }
}

TEST(Ldlc, SingularDirectionsOnTinyVit) {
  const VitConfig c = tiny_config();
  Rng rng(3);
  VitModel model(c, init_weights(c, rng));
  const Vector x0 = uniform_vector(rng, c.input_dim(), 0.2, 0.8);
  const JacobianSvd svd = svd_analysis(jacobian_at(model, x0), x0);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(ldlc_estimate(model, x0, svd.v.col(i)).value / svd.s[i], 1.0, 0.05);
  }
}

TEST(Ldlc, Preconditions) {
  LinearModel model(Matrix::Identity(3, 3));
  const Vector x0 = Vector::Zero(3);
  const Vector d = Vector::Unit(3, 0);
  EXPECT_THROW(ldlc_estimate(model, x0, 2.0 * d), PreconditionError);
  EXPECT_THROW(ldlc_estimate(model, x0, d, 1e-3, 20), PreconditionError);
  EXPECT_THROW(ldlc_estimate(model, x0, d, 1e-3, 1), PreconditionError);
  EXPECT_THROW(ldlc_estimate(model, x0, d, 0.0), PreconditionError);
  EXPECT_THROW(ldlc_estimate(model, x0, Vector::Unit(4, 0)), DimensionError);
}

TEST(Summary, MedianAndHistogram) {
  const LdlcSummary odd = summarize({fake(3), fake(1), fake(2)});
  EXPECT_EQ(odd.median, 2.0);
  EXPECT_EQ(odd.min, 1.0);
  EXPECT_EQ(odd.max, 3.0);
  EXPECT_DOUBLE_EQ(odd.mean, 2.0);
  const LdlcSummary even = summarize({fake(1e-6), fake(1e-3), fake(1.0), fake(0.0)});
  EXPECT_DOUBLE_EQ(even.median, 0.5 * (1e-6 + 1e-3));
  std::size_t total = 0;
  for (const auto& b : even.histogram) {
    total += b.count;
    EXPECT_LE(b.lo, b.hi);
  }
  EXPECT_EQ(total, 4u);
  EXPECT_EQ(even.histogram.front().lo, 0.0);
  EXPECT_EQ(even.histogram.front().count, 1u);
  // 4 bins per decade between 1e-6 and 1e0, plus the zero bin
  EXPECT_EQ(even.histogram.size(), 1u + 25u);
  for (const auto& b : even.histogram) {
    if (b.lo > 0.0) {
      EXPECT_NEAR(b.hi / b.lo, std::pow(10.0, 0.25), 1e-12);
    }
  }
  EXPECT_TRUE(summarize({}).histogram.empty());
}

TEST(Directions, SuiteFamiliesAndNullProperty) {
  Rng rng(4);
  LinearModel model(gaussian_matrix(rng, 3, 20));
  const Vector x0 = gaussian_vector(rng, 20);
  const JacobianSvd svd = svd_analysis(jacobian_at(model, x0), x0);
  Rng dr(5);
  const DirectionSuite suite = direction_suite(svd, dr, {2, 4, 6});
  ASSERT_EQ(suite.directions.size(), 12u);
  EXPECT_EQ(suite.skipped, 0);
  for (std::size_t i = 0; i < suite.directions.size(); ++i) {
    const auto& d = suite.directions[i];
    EXPECT_NEAR(d.direction.norm(), 1.0, 1e-14);
    const DirectionFamily want =
        i < 2 ? DirectionFamily::Singular : i < 6 ? DirectionFamily::RandomGaussian : DirectionFamily::NullProjected;
    EXPECT_EQ(d.family, want);
    if (want == DirectionFamily::NullProjected) {
      EXPECT_LT((model.matrix() * d.direction).norm(), 1e-12);
    }
  }
  EXPECT_THROW(direction_suite(svd, dr, {4, 0, 0}), PreconditionError);
}

TEST(Directions, FullRankMapHasNoNullDirections) {
  Rng rng(6);
  LinearModel model(gaussian_matrix(rng, 5, 5));
  const JacobianSvd svd = svd_analysis(model.matrix(), Vector::Zero(5));
  Rng dr(1);
  const DirectionSuite suite = direction_suite(svd, dr, {0, 0, 3});
  EXPECT_TRUE(suite.directions.empty());
  EXPECT_EQ(suite.skipped, 3);
}

TEST(Distribution, GroupsByFamilyAndIsThreadIndependent) {
  const VitConfig c = tiny_config();
  Rng rng(7);
  VitModel model(c, init_weights(c, rng));
  const Vector x0 = uniform_vector(rng, c.input_dim(), 0.2, 0.8);
  const JacobianSvd svd = svd_analysis(jacobian_at(model, x0), x0);
  Rng dr(8);
  DirectionSuite suite = direction_suite(svd, dr, {1, 20, 20});
  MatchConfig mc;
  mc.cos_tol = std::nullopt;
  mc.loss_tol = 0.0;
  mc.max_iters = 5;
  std::vector<Vector> targets;
  for (int i = 0; i < 6; ++i) targets.push_back(model(uniform_vector(rng, c.input_dim())));
  const auto opt = optimized_directions(model, x0, targets, mc);
  for (const auto& d : opt) EXPECT_NEAR(d.direction.norm(), 1.0, 1e-14);
  suite.directions.insert(suite.directions.begin(), opt.begin(), opt.end());

  setenv("EMBEDDING_ATLAS_THREADS", "1", 1);
  const auto serial = ldlc_distribution(model, x0, suite.directions);
  setenv("EMBEDDING_ATLAS_THREADS", "3", 1);
  const auto threaded = ldlc_distribution(model, x0, suite.directions);
  unsetenv("EMBEDDING_ATLAS_THREADS");

  ASSERT_EQ(serial.size(), 4u);
  EXPECT_EQ(serial[0].family, DirectionFamily::Singular);
  EXPECT_EQ(serial[3].family, DirectionFamily::Optimized);
  EXPECT_EQ(serial[3].estimates.size(), 6u);
  for (std::size_t f = 0; f < serial.size(); ++f) {
    for (std::size_t i = 0; i < serial[f].estimates.size(); ++i) {
      EXPECT_EQ(serial[f].estimates[i].value, threaded[f].estimates[i].value);
    }
  }
  // null directions are far flatter than random ones
  EXPECT_LT(serial[2].summary.median, 1e-2 * serial[1].summary.median);

  std::ostringstream report, hist;
  write_ldlc_report_csv(report, serial);
  write_ldlc_hist_csv(hist, serial);
  EXPECT_EQ(report.str().substr(0, report.str().find('\n')), "family,direction_index,epsilon,value,argmax_alpha,argmax_beta");
  EXPECT_EQ(hist.str().substr(0, hist.str().find('\n')), "family,bin_lo,bin_hi,count");
}
