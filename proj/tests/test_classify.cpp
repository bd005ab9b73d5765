#include <gtest/gtest.h>

#include "atlas/checksum.hpp"
#include "atlas/classify.hpp"
#include "atlas/images.hpp"
#include "atlas/metrics.hpp"
#include "support.hpp"

using namespace atlas;

namespace {

AnchorSet basis_anchors() {
  AnchorSet a;
  a.labels = {"x", "y", "z"};
  a.anchors = Matrix::Identity(3, 4);
  return a;
}

} // namespace

TEST(Classify, AnchorItselfWins) {
  const AnchorSet a = basis_anchors();
  const Classification c = nearest_anchor_classify(a.anchors.row(1).transpose(), a);
  EXPECT_EQ(c.index, 1);
  EXPECT_EQ(c.label, "y");
  EXPECT_DOUBLE_EQ(c.scores[1], 1.0);
  EXPECT_NEAR(c.softmax_scores.sum(), 1.0, 1e-15);
  EXPECT_GT(c.softmax_scores[1], 0.999);
}

TEST(Classify, OrthogonalEmbeddingTiesToFirstLabel) {
  const AnchorSet a = basis_anchors();
  const Classification c = nearest_anchor_classify(Vector::Unit(4, 3), a);
  EXPECT_EQ(c.index, 0);
  EXPECT_EQ(c.scores, Vector::Zero(3));
  EXPECT_NEAR(c.softmax_scores[0], 1.0 / 3.0, 1e-15);
}

TEST(Classify, ScaleInvariant) {
  Rng rng(3);
  AnchorSet a;
  a.labels = {"a", "b", "c", "d"};
  a.anchors = gaussian_matrix(rng, 4, 6);
  for (int k = 0; k < 50; ++k) {
    const Vector e = gaussian_vector(rng, 6);
    EXPECT_EQ(nearest_anchor_classify(e, a).index, nearest_anchor_classify(7.3 * e, a).index);
  }
}

TEST(Classify, SoftmaxTemperature) {
  const AnchorSet a = basis_anchors();
  const Vector e = (Vector(4) << 1.0, 0.5, 0.0, 0.0).finished();
  const Classification c = nearest_anchor_classify(e, a, 2.0);
  const Vector s = c.scores;
  const double z = std::exp(2 * s[0]) + std::exp(2 * s[1]) + std::exp(2 * s[2]);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(c.softmax_scores[i], std::exp(2 * s[i]) / z, 1e-15);
}

TEST(Classify, Errors) {
  const AnchorSet a = basis_anchors();
  EXPECT_THROW(nearest_anchor_classify(Vector::Zero(4), a), DegenerateError);
  EXPECT_THROW(nearest_anchor_classify(Vector::Ones(3), a), DimensionError);
}

TEST(AnchorSet, MeansPerLabel) {
  Rng rng(4);
  LinearModel model(gaussian_matrix(rng, 3, 8));
  const Vector x1 = gaussian_vector(rng, 8), x2 = gaussian_vector(rng, 8), x3 = gaussian_vector(rng, 8);
  const AnchorSet a = build_anchor_set(model, {"p", "q"}, {{"p", x1}, {"q", x2}, {"p", x3}});
  EXPECT_LT((a.anchors.row(0).transpose() - 0.5 * (model(x1) + model(x3))).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(Vector(a.anchors.row(1).transpose()), model(x2));
  ASSERT_EQ(a.provenance.size(), 3u);
  EXPECT_EQ(a.provenance[1], sha256_hex(x2));

  const AnchorSet same = build_anchor_set(model, {"p", "q"}, {{"p", x1}, {"p", x1}, {"q", x2}});
  EXPECT_EQ(Vector(same.anchors.row(0).transpose()), model(x1));
}

TEST(AnchorSet, Validation) {
  Rng rng(5);
  LinearModel model(gaussian_matrix(rng, 3, 8));
  const Vector x = gaussian_vector(rng, 8);
  EXPECT_THROW(build_anchor_set(model, {"p", "q"}, {{"p", x}}), ConfigError);
  EXPECT_THROW(build_anchor_set(model, {"p", "q"}, {{"p", x}, {"r", x}}), ConfigError);
  EXPECT_THROW(build_anchor_set(model, {"p"}, {{"p", x}}), ConfigError);
  EXPECT_THROW(build_anchor_set(model, {"p", "p"}, {{"p", x}}), ConfigError);
  EXPECT_THROW(build_anchor_set(model, {"p", "q"}, {{"p", x}, {"q", Vector::Zero(8)}}), ConfigError);
}

TEST(AnchorSet, SyntheticClassesAreNotCollinear) {
  const VitConfig c = VitConfig::reference();
  Rng rng(7);
  VitModel model(c, init_weights(c, rng));
  std::vector<LabeledInput> inputs;
  for (PatternClass p : {PatternClass::Stripes, PatternClass::Checkers, PatternClass::Disks}) {
    inputs.push_back({to_string(p), synthetic_image(p, 0, c)});
  }
  const AnchorSet a = build_anchor_set(model, {"stripes", "checkers", "disks"}, inputs);
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      EXPECT_LT(cosine_similarity(a.anchors.row(i).transpose(), a.anchors.row(j).transpose()), 0.999);
    }
}

TEST(Checksum, KnownDigest) {
  EXPECT_EQ(sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string()), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
