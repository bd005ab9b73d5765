#include <sstream>

#include <gtest/gtest.h>

#include "atlas/images.hpp"
#include "atlas/paths.hpp"
#include "atlas/spectral.hpp"
#include "support.hpp"

using namespace atlas;
using atlas::testing::tiny_config;
using atlas::testing::uniform_vector;

namespace {

struct TinyVit {
  VitConfig config = tiny_config();
  Rng rng{41};
  VitModel model{config, init_weights(config, rng)};
};

} // namespace

TEST(Interpolate, GridAndEndpoints) {
  TinyVit v;
  const Vector xa = uniform_vector(v.rng, v.config.input_dim());
  const Vector xb = uniform_vector(v.rng, v.config.input_dim());
  const PathTrace two = interpolate_trace(v.model, xa, xb, 2);
  ASSERT_EQ(two.points.size(), 3u);
  EXPECT_EQ(two.points[0].t, 0.0);
  EXPECT_EQ(two.points[1].t, 0.5);
  EXPECT_EQ(two.points[2].t, 1.0);

  const PathTrace trace = interpolate_trace(v.model, xa, xb, 17);
  ASSERT_EQ(trace.points.size(), 18u);
  for (std::size_t i = 1; i < trace.points.size(); ++i) EXPECT_GT(trace.points[i].t, trace.points[i - 1].t);
  EXPECT_NEAR(trace.points.front().cos_to_a, 1.0, 1e-12);
  EXPECT_NEAR(trace.points.back().cos_to_b, 1.0, 1e-12);
  EXPECT_EQ(trace.points.front().dist_a, 0.0);
  EXPECT_EQ(trace.points.back().dist_b, 0.0);
  EXPECT_EQ(trace.points.front().mean_abs_delta, 0.0);
  EXPECT_NEAR(trace.points.back().mean_abs_delta, (xb - xa).cwiseAbs().mean(), 1e-15);
  EXPECT_EQ(path_point(xa, xb, 17, 17), xb);
  EXPECT_EQ(path_point(xa, xb, 0, 17), xa);
}

TEST(Interpolate, IdenticalEndpointsStayPut) {
  TinyVit v;
  const Vector x = uniform_vector(v.rng, v.config.input_dim());
  for (const auto& p : interpolate_trace(v.model, x, x, 5).points) EXPECT_NEAR(p.cos_to_a, 1.0, 1e-12);
}

TEST(Interpolate, ReversalSwapsColumnsExactly) {
  TinyVit v;
  const Vector xa = uniform_vector(v.rng, v.config.input_dim());
  const Vector xb = uniform_vector(v.rng, v.config.input_dim());
  const PathTrace fwd = interpolate_trace(v.model, xa, xb, 11);
  const PathTrace rev = interpolate_trace(v.model, xb, xa, 11);
  for (std::size_t k = 0; k < fwd.points.size(); ++k) {
    const PathPoint& f = fwd.points[k];
    const PathPoint& r = rev.points[fwd.points.size() - 1 - k];
    EXPECT_EQ(f.cos_to_a, r.cos_to_b);
    EXPECT_EQ(f.cos_to_b, r.cos_to_a);
    EXPECT_EQ(f.dist_a, r.dist_b);
    EXPECT_EQ(f.dist_b, r.dist_a);
  }
}

TEST(Interpolate, Preconditions) {
  TinyVit v;
  const Vector x = Vector::Zero(v.config.input_dim());
  EXPECT_THROW(interpolate_trace(v.model, x, x, 1), PreconditionError);
  EXPECT_THROW(interpolate_trace(v.model, x, Vector::Zero(3), 4), DimensionError);
}

TEST(Interpolate, CsvAndFrames) {
  TinyVit v;
  const Vector xa = uniform_vector(v.rng, v.config.input_dim());
  const Vector xb = uniform_vector(v.rng, v.config.input_dim());
  std::ostringstream s;
  write_path_csv(s, interpolate_trace(v.model, xa, xb, 3));
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')), "t,cos_to_a,cos_to_b,dist_a,dist_b,mean_abs_delta");
  const auto dir = std::filesystem::temp_directory_path() / "atlas-test-frames";
  std::filesystem::remove_all(dir);
  const auto files = write_path_frames(dir, xa, xb, 3, v.config);
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(files[3].filename(), "frame_003.ppm");
  EXPECT_LE((load_image(files[3]).flat() - xb).cwiseAbs().maxCoeff(), 1.0 / 510.0 + 1e-15);
}

TEST(NullWalk, ZeroStepsIsSinglePoint) {
  TinyVit v;
  const Vector x0 = uniform_vector(v.rng, v.config.input_dim(), 0.2, 0.8);
  Rng rng(1);
  const WalkTrace t = null_walk(v.model, x0, 0.1, 0, std::nullopt, rng, 1.0);
  ASSERT_EQ(t.points.size(), 1u);
  EXPECT_EQ(t.points[0].embed_drift, 0.0);
  EXPECT_EQ(t.points[0].input_disp, 0.0);
}

TEST(NullWalk, LinearMapHasNoDrift) {
  Rng rng(2);
  LinearModel model(gaussian_matrix(rng, 3, 60));
  const Vector x0 = uniform_vector(rng, 60, 0.4, 0.6);
  Rng walk_rng(3);
  const WalkTrace t = null_walk(model, x0, 0.05, 25, std::nullopt, walk_rng, 1e-6);
  ASSERT_EQ(t.points.size(), 26u);
  EXPECT_EQ(t.reprojections, 0);
  EXPECT_GT(t.points.back().input_disp, 0.1);
  for (const auto& p : t.points) {
    EXPECT_LT(p.embed_drift, 1e-13);
    EXPECT_FALSE(p.clamped);
  }
}

TEST(NullWalk, PerStepDriftIsSecondOrder) {
  TinyVit v;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Vector x0 = uniform_vector(v.rng, v.config.input_dim(), 0.2, 0.8);
    Rng a(seed), b(seed);
    const double big = null_walk(v.model, x0, 0.02, 1, std::nullopt, a, 1e9).points[1].embed_drift;
    const double small = null_walk(v.model, x0, 0.01, 1, std::nullopt, b, 1e9).points[1].embed_drift;
    EXPECT_GE(big / small, 3.0) << "seed " << seed;
  }
}

TEST(NullWalk, StraightModeDisplacementNonDecreasing) {
  TinyVit v;
  const Vector x0 = uniform_vector(v.rng, v.config.input_dim(), 0.2, 0.8);
  Rng rng(4);
  const WalkTrace t = null_walk(v.model, x0, 0.1, 20, std::nullopt, rng, 1e9, WalkMode::Straight);
  for (std::size_t k = 1; k < t.points.size(); ++k) {
    EXPECT_GE(t.points[k].input_disp, t.points[k - 1].input_disp);
  }
}

TEST(NullWalk, DriftCorrectionIsCounted) {
  TinyVit v;
  const Vector x0 = uniform_vector(v.rng, v.config.input_dim(), 0.2, 0.8);
  Rng rng(5);
  const WalkTrace t = null_walk(v.model, x0, 0.5, 5, std::nullopt, rng, 1e-9);
  EXPECT_GT(t.reprojections, 0);
  for (std::size_t k = 1; k < t.points.size(); ++k) {
    EXPECT_GE(t.points[k].reprojections, t.points[k - 1].reprojections);
  }
  EXPECT_EQ(t.points.back().reprojections, t.reprojections);
  std::ostringstream s;
  write_walk_csv(s, t);
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')), "k,input_disp,embed_drift,reprojections");
}

TEST(NullWalk, EmptyNullSpaceFailsTheStep) {
  Rng rng(6);
  LinearModel model(gaussian_matrix(rng, 4, 4));
  Rng walk_rng(7);
  try {
    null_walk(model, Vector::Constant(4, 0.5), 0.1, 3, std::nullopt, walk_rng, 1.0);
    FAIL();
  } catch (const WalkStepError& e) {
    EXPECT_EQ(e.step(), 1);
  }
  EXPECT_THROW(null_walk(model, Vector::Zero(4), 0.0, 1, std::nullopt, walk_rng, 1.0), PreconditionError);
  EXPECT_THROW(null_walk(model, Vector::Zero(4), 0.1, 1, std::nullopt, walk_rng, 0.0), PreconditionError);
}
