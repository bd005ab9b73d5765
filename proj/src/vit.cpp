#include "atlas/vit.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace atlas {

namespace {

constexpr std::array<char, 4> kEvitMagic = {'E', 'V', 'I', 'T'};
constexpr std::uint32_t kEvitVersion = 1;

Matrix scaled_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double fan_in) {
  return gaussian_matrix(rng, rows, cols) / std::sqrt(fan_in);
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(name + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void expect_size(const Vector& v, Eigen::Index n, const std::string& name) {
  if (v.size() != n) throw DimensionError(name + " has length " + std::to_string(v.size()) + ", expected " + std::to_string(n));
}

std::array<std::uint32_t*, 10> config_fields(VitConfig& c) {
  return {&c.image_size, &c.channels, &c.patch_size, &c.n_patches, &c.d_model,
          &c.n_heads,    &c.head_dim, &c.mlp_hidden, &c.n_layers,  &c.embed_dim};
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  std::memcpy(b.data(), &v, 4);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, std::size_t offset) {
  std::array<char, 4> b;
  if (!in.read(b.data(), 4)) throw ParseError("EVIT: truncated header", offset);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  std::uint32_t v;
  std::memcpy(&v, b.data(), 4);
  return v;
}

// Visits every weight tensor in file order.
template <typename Weights, typename Visit>
void for_each_tensor(Weights& w, Visit&& visit) {
  visit(w.patch_proj);
  visit(w.positional);
  for (auto& layer : w.layers) {
    for (auto& head : layer.heads) {
      visit(head.query);
      visit(head.key);
      visit(head.value);
      visit(head.mix);
    }
    visit(layer.gamma1);
    visit(layer.beta1);
    visit(layer.gamma2);
    visit(layer.beta2);
    visit(layer.mlp_in);
    visit(layer.mlp_out);
  }
  visit(w.embed_proj);
}

} // namespace

void VitConfig::validate() const {
  if (image_size == 0 || channels == 0 || patch_size == 0 || d_model == 0 || n_heads == 0 || head_dim == 0 ||
      mlp_hidden == 0 || n_layers == 0 || embed_dim == 0) {
    throw ConfigError("VitConfig: all sizes must be positive");
  }
  if (image_size % patch_size != 0) throw ConfigError("VitConfig: image_size must be divisible by patch_size");
  const std::uint32_t grid = image_size / patch_size;
  if (n_patches != grid * grid) {
    throw ConfigError("VitConfig: n_patches must equal (image_size/patch_size)^2 = " + std::to_string(grid * grid));
  }
  if (n_heads * head_dim != d_model) throw ConfigError("VitConfig: n_heads * head_dim must equal d_model");
  if (d_model < 2) throw ConfigError("VitConfig: d_model must be at least 2 for layer norm");
  if (Eigen::Index(embed_dim) >= input_dim()) throw ConfigError("VitConfig: embed_dim must be below the input dimension");
}

void VitWeights::check(const VitConfig& c) const {
  const Eigen::Index d = c.d_model;
  expect_shape(patch_proj, c.patch_dim(), d, "patch_proj");
  expect_shape(positional, c.n_patches, d, "positional");
  if (layers.size() != c.n_layers) throw DimensionError("weights carry " + std::to_string(layers.size()) + " layers");
  for (const LayerWeights& layer : layers) {
    if (layer.heads.size() != c.n_heads) throw DimensionError("layer head count mismatch");
    for (const HeadWeights& h : layer.heads) {
      expect_shape(h.query, d, c.head_dim, "query");
      expect_shape(h.key, d, c.head_dim, "key");
      expect_shape(h.value, d, c.head_dim, "value");
      expect_shape(h.mix, c.head_dim, d, "mix");
    }
    expect_size(layer.gamma1, d, "gamma1");
    expect_size(layer.beta1, d, "beta1");
    expect_size(layer.gamma2, d, "gamma2");
    expect_size(layer.beta2, d, "beta2");
    expect_shape(layer.mlp_in, d, c.mlp_hidden, "mlp_in");
    expect_shape(layer.mlp_out, c.mlp_hidden, d, "mlp_out");
  }
  expect_shape(embed_proj, d, c.embed_dim, "embed_proj");
  bool finite = true;
  for_each_tensor(*this, [&](const auto& t) { finite = finite && t.allFinite(); });
  if (!finite) throw NumericError("VitWeights: non-finite entries", 0.0);
}

VitWeights init_weights(const VitConfig& c, Rng& rng) {
  c.validate();
  const Eigen::Index d = c.d_model;
  VitWeights w;
  w.patch_proj = scaled_gaussian(rng, c.patch_dim(), d, double(c.patch_dim()));
  w.positional = scaled_gaussian(rng, c.n_patches, d, double(d));
  w.layers.resize(c.n_layers);
  for (LayerWeights& layer : w.layers) {
    layer.heads.resize(c.n_heads);
    for (HeadWeights& h : layer.heads) {
      h.query = scaled_gaussian(rng, d, c.head_dim, double(d));
      h.key = scaled_gaussian(rng, d, c.head_dim, double(d));
      h.value = scaled_gaussian(rng, d, c.head_dim, double(d));
      h.mix = scaled_gaussian(rng, c.head_dim, d, double(c.head_dim));
    }
    layer.gamma1 = Vector::Ones(d);
    layer.beta1 = Vector::Zero(d);
    layer.gamma2 = Vector::Ones(d);
    layer.beta2 = Vector::Zero(d);
    layer.mlp_in = scaled_gaussian(rng, d, c.mlp_hidden, double(d));
    layer.mlp_out = scaled_gaussian(rng, c.mlp_hidden, d, double(c.mlp_hidden));
  }
  w.embed_proj = scaled_gaussian(rng, d, c.embed_dim, double(d));
  return w;
}

GatherIndex patch_index(const VitConfig& c) {
  const Eigen::Index size = c.image_size;
  const Eigen::Index p = c.patch_size;
  const Eigen::Index grid = size / p;
  auto index = std::make_shared<std::vector<Eigen::Index>>();
  index->reserve(std::size_t(c.n_patches) * std::size_t(c.patch_dim()));
  for (Eigen::Index py = 0; py < grid; ++py) {
    for (Eigen::Index px = 0; px < grid; ++px) {
      for (Eigen::Index ch = 0; ch < Eigen::Index(c.channels); ++ch) {
        for (Eigen::Index i = 0; i < p; ++i) {
          for (Eigen::Index j = 0; j < p; ++j) {
            index->push_back(ch * size * size + (py * p + i) * size + (px * p + j));
          }
        }
      }
    }
  }
  return index;
}

Matrix patchify(const Vector& image, const VitWeights& w, const VitConfig& config) {
  if (image.size() != config.input_dim()) throw DimensionError("patchify: image size mismatch");
  Eval g;
  return detail::patch_tokens(g, g.input(image), w, config, patch_index(config));
}

Matrix attention_block(const Matrix& tokens, const LayerWeights& layer, const VitConfig& config) {
  Eval g;
  return detail::attention_block(g, g.input(tokens), layer, config);
}

Matrix attention_weights(const Matrix& tokens, const HeadWeights& head, const VitConfig& config) {
  const Matrix q = matmul(tokens, head.query);
  const Matrix k = matmul(tokens, head.key);
  return softmax_rows(matmul(q, k.transpose()) * (1.0 / std::sqrt(double(config.head_dim))));
}

VitModel::VitModel(VitConfig config, VitWeights weights)
    : config_(config), weights_(std::move(weights)), index_(patch_index(config)) {
  config_.validate();
  weights_.check(config_);
}

void VitModel::check_input(const Vector& x) const {
  if (x.size() != config_.input_dim()) {
    throw DimensionError("image has " + std::to_string(x.size()) + " values, model expects " +
                         std::to_string(config_.input_dim()));
  }
}

Vector VitModel::evaluate(const Vector& x) const {
  check_input(x);
  Eval g;
  return flatten(vit_graph(g, g.input(x), weights_, config_, index_));
}

Tape VitModel::record(const Vector& x) const {
  check_input(x);
  Tape tape;
  tape.set_output(vit_graph(tape, tape.input(x), weights_, config_, index_));
  return tape;
}

Vector embed(const Vector& image, const VitWeights& weights, const VitConfig& config) {
  return VitModel(config, weights).evaluate(image);
}

void write_evit(std::ostream& out, const VitConfig& config, const VitWeights& weights) {
  weights.check(config);
  out.write(kEvitMagic.data(), kEvitMagic.size());
  put_u32(out, kEvitVersion);
  VitConfig copy = config;
  for (std::uint32_t* field : config_fields(copy)) put_u32(out, *field);
  for_each_tensor(weights, [&](const auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Vector>) {
      write_emat(out, Tensor::from_vector(t));
    } else {
      write_emat(out, Tensor::from_matrix(t));
    }
  });
  if (!out) throw IoError("EVIT: write failed");
}

std::pair<VitConfig, VitWeights> read_evit(std::istream& in) {
  std::array<char, 4> magic;
  if (!in.read(magic.data(), 4) || magic != kEvitMagic) throw ParseError("EVIT: bad magic", 0);
  const std::uint32_t version = get_u32(in, 4);
  if (version != kEvitVersion) throw ParseError("EVIT: unsupported version " + std::to_string(version), 4);
  VitConfig config;
  std::size_t offset = 8;
  for (std::uint32_t* field : config_fields(config)) {
    *field = get_u32(in, offset);
    offset += 4;
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("EVIT: ") + e.what(), 8);
  }
  VitWeights w;
  w.layers.resize(config.n_layers);
  for (auto& layer : w.layers) layer.heads.resize(config.n_heads);
  for_each_tensor(w, [&](auto& t) {
    const Tensor tensor = read_emat(in);
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Vector>) {
      if (tensor.rank() != 1) throw ParseError("EVIT: expected a rank-1 tensor", std::size_t(in.tellg()));
      t = tensor.flat();
    } else {
      if (tensor.rank() != 2) throw ParseError("EVIT: expected a rank-2 tensor", std::size_t(in.tellg()));
      t = tensor.matrix();
    }
  });
  w.check(config);
  return {config, std::move(w)};
}

void save_evit(const std::filesystem::path& path, const VitConfig& config, const VitWeights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_evit(out, config, weights);
}

std::pair<VitConfig, VitWeights> load_evit(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_evit(in);
}

} // namespace atlas
