#ifndef ATLAS_AUTODIFF_HPP
#define ATLAS_AUTODIFF_HPP

#include <cstddef>
#include <memory>
#include <string_view>
#include <vector>

#include "atlas/linalg.hpp"
#include "atlas/parallel.hpp"
#include "atlas/tensor.hpp"

namespace atlas {

/// Index list for Tape::gather / Eval::gather; entry r * cols + c names the
/// flat (row-major) source element of output (r, c).
using GatherIndex = std::shared_ptr<const std::vector<Eigen::Index>>;

/// Reverse-mode tape over whole-matrix primitives.
///
/// Every primitive computes its forward value with the same kernel the plain
/// evaluator (Eval) uses, so a recorded forward pass is bitwise identical to
/// an unrecorded one. Weights enter as constants and never receive
/// gradients.
class Tape {
public:
  struct Var {
    std::size_t id = 0;
  };

  Var input(Matrix value);
  Var constant(Matrix value);

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var a, const Vector& gamma, const Vector& beta);
  Var gather(Var a, GatherIndex index, Eigen::Index rows, Eigen::Index cols);
  Var mean_rows(Var a);
  Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
  Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);

  /// Named unary primitive ("relu", "softmax_rows", "mean_rows"). Anything
  /// else throws CapabilityError.
  Var apply(std::string_view primitive, Var a);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }

  void set_output(Var v) { output_ = v.id; }
  const Matrix& output() const { return nodes_.at(output_).value; }
  const Matrix& input_value() const { return nodes_.at(input_).value; }

  /// Number of recorded differentiable operations (inputs and constants
  /// excluded).
  std::size_t size() const noexcept { return op_count_; }

  /// (d output / d input)^T * cotangent, shaped like the input.
  Matrix vjp(const Matrix& cotangent) const;

  /// Last instrumented layer-norm check result, see check_layer_norms().
  struct LayerNormCheck {
    double max_abs_mean = 0.0;
    double max_std_error = 0.0;
    std::size_t count = 0;  ///< layer-norm nodes scanned
  };
  /// Scans every recorded layer norm: per token, the pre-affine output must
  /// have mean ~0 and population std equal to sqrt(var / (var + eps)).
  LayerNormCheck check_layer_norms() const;

private:
  enum class Op { Input, Constant, MatMul, MatMulNT, Add, Scale, Relu, Softmax, LayerNorm, Gather, MeanRows, Reshape, SliceCols };

  struct Node {
    explicit Node(Op kind, std::size_t lhs = 0, std::size_t rhs = 0, bool grad = false)
        : op(kind), a(lhs), b(rhs), needs_grad(grad) {}

    Op op;
    std::size_t a = 0;
    std::size_t b = 0;
    bool needs_grad = false;
    Matrix value;
    Matrix saved;        // LayerNorm: normalized input
    Vector saved_vec;    // LayerNorm: inverse std per row
    RowVector gamma;     // LayerNorm
    double factor = 0.0; // Scale
    GatherIndex index;   // Gather
    Eigen::Index p0 = 0; // Reshape/Gather/Slice: source rows or begin
    Eigen::Index p1 = 0; // Reshape/Gather/Slice: source cols
  };

  Var push(Node node);
  const Node& node(Var v) const { return nodes_.at(v.id); }

  std::vector<Node> nodes_;
  std::size_t input_ = 0;
  std::size_t output_ = 0;
  std::size_t op_count_ = 0;
};

/// Plain forward evaluator with the same interface as Tape; values flow
/// directly with nothing recorded.
class Eval {
public:
  using Var = Matrix;

  Var input(Matrix value) { return value; }
  Var constant(Matrix value) { return value; }
  Var matmul(const Var& a, const Var& b) { return atlas::matmul(a, b); }
  Var matmul_nt(const Var& a, const Var& b) { return atlas::matmul(a, b.transpose()); }
  Var add(const Var& a, const Var& b);
  Var scale(const Var& a, double factor) { return a * factor; }
  Var relu(const Var& a) { return a.cwiseMax(0.0); }
  Var softmax_rows(const Var& a) { return atlas::softmax_rows(a); }
  Var layer_norm_rows(const Var& a, const Vector& gamma, const Vector& beta) {
    return atlas::layer_norm_rows(a, gamma, beta);
  }
  Var gather(const Var& a, const GatherIndex& index, Eigen::Index rows, Eigen::Index cols);
  Var mean_rows(const Var& a) { return a.colwise().sum() / double(a.rows()); }
  Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
  Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) { return a.middleCols(begin, count); }
  Var apply(std::string_view primitive, const Var& a);
  const Matrix& value(const Var& v) const { return v; }
};

/// Row-major flattening of a matrix.
inline Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

/// Records fn(tape, input) where the input is x as an m x 1 column.
template <typename Fn>
Tape record(Fn&& fn, const Vector& x) {
  Tape tape;
  auto in = tape.input(x);
  tape.set_output(fn(tape, in));
  return tape;
}

/// Unrecorded forward pass of the same graph function, flattened.
template <typename Fn>
Vector evaluate(Fn&& fn, const Vector& x) {
  Eval g;
  return flatten(fn(g, g.input(x)));
}

/// Cotangent given as a flat vector (row-major over the output shape).
Vector vjp(const Tape& tape, const Vector& cotangent);

/// Full Jacobian (n x m), one reverse pass per output coordinate. Rows are
/// computed independently (in parallel when threads are available) and
/// written by index.
Matrix jacobian(const Tape& tape);

template <typename Fn>
Matrix jacobian(Fn&& fn, const Vector& x) {
  return jacobian(record(std::forward<Fn>(fn), x));
}

inline constexpr double kFiniteDiffStep = 1e-5;

/// Central differences: column j = (f(x + h e_j) - f(x - h e_j)) / (2h).
template <typename Fn>
Matrix finite_diff_jacobian(Fn&& f, const Vector& x, double h = kFiniteDiffStep) {
  if (!(h > 0)) throw PreconditionError("finite_diff_jacobian: step must be positive");
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  parallel_for(std::size_t(x.size()), [&](std::size_t col) {
    const auto j = Eigen::Index(col);
    Vector plus = x;
    Vector minus = x;
    plus(j) += h;
    minus(j) -= h;
    jac.col(j) = (f(plus) - f(minus)) / (2.0 * h);
  });
  return jac;
}

/// A differentiable map R^m -> R^n that can evaluate itself plainly or onto
/// a tape. Analysis routines work against this interface so they run on the
/// transformer and on closed-form test maps alike.
class Model {
public:
  virtual ~Model() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual Vector evaluate(const Vector& x) const = 0;
  virtual Tape record(const Vector& x) const = 0;

  Vector operator()(const Vector& x) const { return evaluate(x); }
  Matrix jacobian(const Vector& x) const { return atlas::jacobian(record(x)); }
};

/// Model backed by a generic graph function `fn(graph, input_var)`, usable
/// with both Tape and Eval.
template <typename Fn>
class GraphModel final : public Model {
public:
  GraphModel(Fn fn, Eigen::Index input_dim, Eigen::Index output_dim)
      : fn_(std::move(fn)), input_dim_(input_dim), output_dim_(output_dim) {}

  Eigen::Index input_dim() const override { return input_dim_; }
  Eigen::Index output_dim() const override { return output_dim_; }
  Vector evaluate(const Vector& x) const override { return atlas::evaluate(fn_, x); }
  Tape record(const Vector& x) const override { return atlas::record(fn_, x); }

private:
  Fn fn_;
  Eigen::Index input_dim_;
  Eigen::Index output_dim_;
};

template <typename Fn>
GraphModel<Fn> make_model(Fn fn, Eigen::Index input_dim, Eigen::Index output_dim) {
  return GraphModel<Fn>(std::move(fn), input_dim, output_dim);
}

/// f(x) = A x, the closed-form reference map used throughout the tests.
class LinearModel final : public Model {
public:
  explicit LinearModel(Matrix a) : a_(std::move(a)) {}
  Eigen::Index input_dim() const override { return a_.cols(); }
  Eigen::Index output_dim() const override { return a_.rows(); }
  Vector evaluate(const Vector& x) const override;
  Tape record(const Vector& x) const override;
  const Matrix& matrix() const noexcept { return a_; }

private:
  Matrix a_;
};

} // namespace atlas

#endif // ATLAS_AUTODIFF_HPP
