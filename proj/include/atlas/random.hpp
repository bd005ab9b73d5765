#ifndef ATLAS_RANDOM_HPP
#define ATLAS_RANDOM_HPP

#include <cstdint>

#include "atlas/tensor.hpp"

namespace atlas {

/// Counter-based generator: the i-th output is a pure function of
/// (seed, stream, i), so sequences are reproducible and independent streams
/// can be derived by index without sharing state.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1).
  double uniform();
  /// Standard normal (Box-Muller; consumes two counters per pair).
  double normal();

  /// Independent generator for parallel workers.
  Rng split(std::uint64_t stream) const { return Rng(seed_, stream); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// i.i.d. standard normal entries.
Tensor gaussian(Rng& rng, const Shape& shape);
Vector gaussian_vector(Rng& rng, Eigen::Index n);
Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols);

} // namespace atlas

#endif // ATLAS_RANDOM_HPP
