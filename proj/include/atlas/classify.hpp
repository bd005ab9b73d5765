#ifndef ATLAS_CLASSIFY_HPP
#define ATLAS_CLASSIFY_HPP

#include <string>
#include <vector>

#include "atlas/autodiff.hpp"

namespace atlas {

inline constexpr double kSoftmaxTemperature = 100.0;

/// Class anchors in embedding space; row i of `anchors` belongs to labels[i].
struct AnchorSet {
  std::vector<std::string> labels;
  Matrix anchors;                        ///< L x n
  std::vector<std::string> provenance;   ///< sha256 of each contributing input, in input order

  /// Throws ConfigError unless L >= 2, labels are distinct and every anchor
  /// is non-zero.
  void validate() const;
};

struct LabeledInput {
  std::string label;
  Vector x;
};

/// Anchor per label = mean embedding of that label's inputs. Labels keep the
/// given order; a label without inputs, or an input with an unknown label,
/// is a ConfigError.
AnchorSet build_anchor_set(const Model& model, const std::vector<std::string>& labels,
                           const std::vector<LabeledInput>& inputs);

struct Classification {
  Eigen::Index index = 0;
  std::string label;
  Vector scores;          ///< cosine to each anchor
  Vector softmax_scores;  ///< softmax(temperature * scores)
};

/// Nearest anchor by cosine; ties go to the lowest index.
Classification nearest_anchor_classify(const Vector& embedding, const AnchorSet& anchors,
                                       double temperature = kSoftmaxTemperature);

} // namespace atlas

#endif // ATLAS_CLASSIFY_HPP
