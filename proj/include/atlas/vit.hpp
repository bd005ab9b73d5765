#ifndef ATLAS_VIT_HPP
#define ATLAS_VIT_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "atlas/autodiff.hpp"
#include "atlas/random.hpp"

namespace atlas {

/// Hyperparameters of the toy vision transformer. Field order is the on-disk
/// order of the EVIT header.
struct VitConfig {
  std::uint32_t image_size = 32;
  std::uint32_t channels = 3;
  std::uint32_t patch_size = 8;
  std::uint32_t n_patches = 16;
  std::uint32_t d_model = 32;
  std::uint32_t n_heads = 4;
  std::uint32_t head_dim = 8;
  std::uint32_t mlp_hidden = 64;
  std::uint32_t n_layers = 2;
  std::uint32_t embed_dim = 16;

  /// 32x32x3 images, 8x8 patches, width 32, 4 heads of 8, MLP 64, 2 layers,
  /// 16-dim embedding.
  static VitConfig reference() { return {}; }

  Eigen::Index input_dim() const { return Eigen::Index(channels) * image_size * image_size; }
  Eigen::Index patch_dim() const { return Eigen::Index(channels) * patch_size * patch_size; }

  /// Throws ConfigError on any inconsistency.
  void validate() const;

  friend bool operator==(const VitConfig&, const VitConfig&) = default;
};

struct HeadWeights {
  Matrix query;  ///< d_model x head_dim
  Matrix key;    ///< d_model x head_dim
  Matrix value;  ///< d_model x head_dim
  Matrix mix;    ///< head_dim x d_model
};

struct LayerWeights {
  std::vector<HeadWeights> heads;
  Vector gamma1, beta1, gamma2, beta2;
  Matrix mlp_in;   ///< d_model x mlp_hidden
  Matrix mlp_out;  ///< mlp_hidden x d_model
};

struct VitWeights {
  Matrix patch_proj;   ///< patch_dim x d_model
  Matrix positional;   ///< n_patches x d_model
  std::vector<LayerWeights> layers;
  Matrix embed_proj;   ///< d_model x embed_dim

  /// Throws DimensionError if any shape disagrees with `config` and
  /// NumericError on non-finite entries.
  void check(const VitConfig& config) const;
};

/// Gaussian initialization scaled by 1/sqrt(fan_in); LN gains 1, shifts 0.
VitWeights init_weights(const VitConfig& config, Rng& rng);

/// Flat-image index of every patch entry: patches in row-major grid order,
/// entries channel-major within a patch. Images are channels x size x size.
GatherIndex patch_index(const VitConfig& config);

namespace detail {

template <typename Graph>
typename Graph::Var attention_block(Graph& g, typename Graph::Var x, const LayerWeights& layer,
                                    const VitConfig& config) {
  const double inv_sqrt_k = 1.0 / std::sqrt(double(config.head_dim));
  typename Graph::Var mixed{};
  bool first = true;
  for (const HeadWeights& head : layer.heads) {
    auto q = g.matmul(x, g.constant(head.query));
    auto k = g.matmul(x, g.constant(head.key));
    auto v = g.matmul(x, g.constant(head.value));
    auto alpha = g.softmax_rows(g.scale(g.matmul_nt(q, k), inv_sqrt_k));
    auto head_out = g.matmul(g.matmul(alpha, v), g.constant(head.mix));
    mixed = first ? head_out : g.add(mixed, head_out);
    first = false;
  }
  auto u = g.layer_norm_rows(g.add(x, mixed), layer.gamma1, layer.beta1);
  auto hidden = g.relu(g.matmul(u, g.constant(layer.mlp_in)));
  auto z = g.matmul(hidden, g.constant(layer.mlp_out));
  return g.layer_norm_rows(g.add(u, z), layer.gamma2, layer.beta2);
}

template <typename Graph>
typename Graph::Var patch_tokens(Graph& g, typename Graph::Var image, const VitWeights& w, const VitConfig& config,
                                 const GatherIndex& index) {
  auto patches = g.gather(image, index, config.n_patches, config.patch_dim());
  return g.add(g.matmul(patches, g.constant(w.patch_proj)), g.constant(w.positional));
}

} // namespace detail

/// image (flat, any shape) -> 1 x embed_dim embedding row.
template <typename Graph>
typename Graph::Var vit_graph(Graph& g, typename Graph::Var image, const VitWeights& w, const VitConfig& config,
                              const GatherIndex& index) {
  auto x = detail::patch_tokens(g, image, w, config, index);
  for (const LayerWeights& layer : w.layers) x = detail::attention_block(g, x, layer, config);
  return g.matmul(g.mean_rows(x), g.constant(w.embed_proj));
}

/// Projected patch tokens (n_patches x d_model) including positional rows.
Matrix patchify(const Vector& image, const VitWeights& w, const VitConfig& config);

/// One transformer block on a token matrix.
Matrix attention_block(const Matrix& tokens, const LayerWeights& layer, const VitConfig& config);

/// Attention weights of one head (n_patches x n_patches).
Matrix attention_weights(const Matrix& tokens, const HeadWeights& head, const VitConfig& config);

/// The transformer as a differentiable map from a flat image in [0,1]^m to
/// an (unnormalized) embedding in R^n.
class VitModel final : public Model {
public:
  VitModel(VitConfig config, VitWeights weights);

  Eigen::Index input_dim() const override { return config_.input_dim(); }
  Eigen::Index output_dim() const override { return config_.embed_dim; }
  Vector evaluate(const Vector& x) const override;
  Tape record(const Vector& x) const override;

  const VitConfig& config() const noexcept { return config_; }
  const VitWeights& weights() const noexcept { return weights_; }

private:
  void check_input(const Vector& x) const;

  VitConfig config_;
  VitWeights weights_;
  GatherIndex index_;
};

/// Convenience: embedding of a flat image.
Vector embed(const Vector& image, const VitWeights& weights, const VitConfig& config);

// EVIT weights file: "EVIT", u32 version (1), the ten VitConfig fields as
// u32 in declaration order, then each tensor in EMAT layout in this order:
// patch_proj, positional, for each layer { for each head { query, key,
// value, mix }, gamma1, beta1, gamma2, beta2, mlp_in, mlp_out }, embed_proj.
// Vectors are stored as rank-1 tensors, matrices as rank-2.
void write_evit(std::ostream& out, const VitConfig& config, const VitWeights& weights);
std::pair<VitConfig, VitWeights> read_evit(std::istream& in);
void save_evit(const std::filesystem::path& path, const VitConfig& config, const VitWeights& weights);
std::pair<VitConfig, VitWeights> load_evit(const std::filesystem::path& path);

} // namespace atlas

#endif // ATLAS_VIT_HPP
