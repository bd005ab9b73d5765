#ifndef ATLAS_TENSOR_HPP
#define ATLAS_TENSOR_HPP

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <numeric>
#include <string>
#include <vector>

#include "atlas/errors.hpp"

namespace atlas {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major array of arbitrary rank. Storage is a flat Eigen vector so
/// any tensor can be viewed as a vector or (for rank 2) a row-major matrix
/// without copying.
template <typename Scalar>
class BasicTensor {
public:
  using MatrixMap = Eigen::Map<MatrixX<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const MatrixX<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape)
      : shape_(std::move(shape)), data_(VectorX<Scalar>::Zero(Eigen::Index(shape_size(shape_)))) {}

  BasicTensor(Shape shape, VectorX<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != std::size_t(data_.size())) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static BasicTensor from_matrix(const MatrixX<Scalar>& m) {
    VectorX<Scalar> flat = Eigen::Map<const VectorX<Scalar>>(m.data(), m.size());
    return BasicTensor({std::size_t(m.rows()), std::size_t(m.cols())}, std::move(flat));
  }

  static BasicTensor from_vector(const VectorX<Scalar>& v) {
    return BasicTensor({std::size_t(v.size())}, v);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return std::size_t(data_.size()); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  VectorX<Scalar>& flat() noexcept { return data_; }
  const VectorX<Scalar>& flat() const noexcept { return data_; }

  /// Row-major matrix view. Rank-1 tensors view as a single row.
  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  Eigen::Index rows() const {
    if (shape_.size() == 1) return 1;
    if (shape_.size() != 2) throw DimensionError("matrix view requires rank 1 or 2, got " + shape_string(shape_));
    return Eigen::Index(shape_[0]);
  }
  Eigen::Index cols() const { return shape_.empty() ? 1 : Eigen::Index(shape_.back()); }

  Shape shape_;
  VectorX<Scalar> data_;
};

using Tensor = BasicTensor<double>;

// EMAT binary format: "EMAT", u32 version (1), u32 rank, u64 dims[rank],
// then the little-endian f64 payload in row-major order.
void write_emat(std::ostream& out, const Tensor& t);
Tensor read_emat(std::istream& in);
void save_emat(const std::filesystem::path& path, const Tensor& t);
Tensor load_emat(const std::filesystem::path& path);

/// One CSV row per trailing-dimension slice, 17 significant digits.
void write_csv(std::ostream& out, const Tensor& t);

/// `%.17g` formatting used for every number written to CSV.
std::string format_double(double v);

} // namespace atlas

#endif // ATLAS_TENSOR_HPP
