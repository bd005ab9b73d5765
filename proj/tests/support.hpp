#ifndef ATLAS_TESTS_SUPPORT_HPP
#define ATLAS_TESTS_SUPPORT_HPP

#include <cmath>

#include <gtest/gtest.h>

#include "atlas/random.hpp"
#include "atlas/vit.hpp"

namespace atlas::testing {

/// 8x8x3 images, 4x4 patches, width 8, 2 heads of 4, one layer, 4-dim
/// embedding: m = 192, small enough for dense finite differences.
inline VitConfig tiny_config() {
  VitConfig c;
  c.image_size = 8;
  c.channels = 3;
  c.patch_size = 4;
  c.n_patches = 4;
  c.d_model = 8;
  c.n_heads = 2;
  c.head_dim = 4;
  c.mlp_hidden = 16;
  c.n_layers = 1;
  c.embed_dim = 4;
  return c;
}

/// Uniform point in [lo, hi]^n.
inline Vector uniform_vector(Rng& rng, Eigen::Index n, double lo = 0.0, double hi = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = lo + (hi - lo) * rng.uniform();
  return v;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace atlas::testing

#endif // ATLAS_TESTS_SUPPORT_HPP
