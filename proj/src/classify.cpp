#include "atlas/classify.hpp"

#include <algorithm>
#include <set>

#include "atlas/checksum.hpp"
#include "atlas/linalg.hpp"
#include "atlas/metrics.hpp"
#include "atlas/parallel.hpp"

namespace atlas {

void AnchorSet::validate() const {
  if (labels.size() < 2) throw ConfigError("anchor set needs at least two labels");
  if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size()) {
    throw ConfigError("anchor labels must be distinct");
  }
  if (anchors.rows() != Eigen::Index(labels.size())) throw DimensionError("anchor rows do not match labels");
  for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
    if (!(anchors.row(i).norm() > 0.0)) throw ConfigError("anchor '" + labels[std::size_t(i)] + "' is zero");
  }
}

AnchorSet build_anchor_set(const Model& model, const std::vector<std::string>& labels,
                           const std::vector<LabeledInput>& inputs) {
  AnchorSet set;
  set.labels = labels;
  set.anchors = Matrix::Zero(Eigen::Index(labels.size()), model.output_dim());
  std::vector<int> counts(labels.size(), 0);
  std::vector<std::size_t> slot(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto it = std::find(labels.begin(), labels.end(), inputs[i].label);
    if (it == labels.end()) throw ConfigError("input has unknown label '" + inputs[i].label + "'");
    slot[i] = std::size_t(it - labels.begin());
    ++counts[slot[i]];
  }
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (counts[l] == 0) throw ConfigError("label '" + labels[l] + "' has no inputs");
  }

  std::vector<Vector> embeddings(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) { embeddings[i] = model(inputs[i].x); });
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    set.anchors.row(Eigen::Index(slot[i])) += embeddings[i].transpose();
    set.provenance.push_back(sha256_hex(inputs[i].x));
  }
  for (std::size_t l = 0; l < labels.size(); ++l) set.anchors.row(Eigen::Index(l)) /= double(counts[l]);
  set.validate();
  return set;
}

Classification nearest_anchor_classify(const Vector& embedding, const AnchorSet& anchors, double temperature) {
  if (embedding.size() != anchors.anchors.cols()) throw DimensionError("classify: embedding size mismatch");
  Classification c;
  c.scores.resize(anchors.anchors.rows());
  for (Eigen::Index i = 0; i < anchors.anchors.rows(); ++i) {
    c.scores[i] = cosine_similarity(embedding, anchors.anchors.row(i).transpose());
  }
  c.index = 0;
  for (Eigen::Index i = 1; i < c.scores.size(); ++i) {
    if (c.scores[i] > c.scores[c.index]) c.index = i;
  }
  c.label = anchors.labels[std::size_t(c.index)];
  const Matrix scaled = (temperature * c.scores).transpose();
  c.softmax_scores = softmax_rows(scaled).transpose();
  return c;
}

} // namespace atlas
