#include "atlas/autodiff.hpp"

#include <cmath>
#include <string>

namespace atlas {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

Matrix gather_values(const Matrix& a, const GatherIndex& index, Eigen::Index rows, Eigen::Index cols) {
  if (!index || Eigen::Index(index->size()) != rows * cols) throw DimensionError("gather: index size mismatch");
  Matrix out(rows, cols);
  const double* src = a.data();
  for (Eigen::Index k = 0; k < rows * cols; ++k) {
    const Eigen::Index from = (*index)[std::size_t(k)];
    if (from < 0 || from >= a.size()) throw DimensionError("gather: index out of range");
    out.data()[k] = src[from];
  }
  return out;
}

Matrix reshape_values(const Matrix& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.size()) throw DimensionError("reshape: element count mismatch");
  return Eigen::Map<const Matrix>(a.data(), rows, cols);
}

} // namespace

Matrix Eval::add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return a + b;
}

Matrix Eval::gather(const Var& a, const GatherIndex& index, Eigen::Index rows, Eigen::Index cols) {
  return gather_values(a, index, rows, cols);
}

Matrix Eval::reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) { return reshape_values(a, rows, cols); }

Matrix Eval::apply(std::string_view primitive, const Var& a) {
  if (primitive == "relu") return relu(a);
  if (primitive == "softmax_rows") return softmax_rows(a);
  if (primitive == "mean_rows") return mean_rows(a);
  throw CapabilityError("unsupported primitive '" + std::string(primitive) + "'");
}

Tape::Var Tape::push(Node node) {
  if (node.op != Op::Input && node.op != Op::Constant) ++op_count_;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::input(Matrix value) {
  Node n(Op::Input);
  n.needs_grad = true;
  n.value = std::move(value);
  const Var v = push(std::move(n));
  input_ = v.id;
  return v;
}

Tape::Var Tape::constant(Matrix value) {
  Node n(Op::Constant);
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b) {
  Node n(Op::MatMul, a.id, b.id, node(a).needs_grad || node(b).needs_grad);
  n.value = atlas::matmul(node(a).value, node(b).value);
  return push(std::move(n));
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
  Node n(Op::MatMulNT, a.id, b.id, node(a).needs_grad || node(b).needs_grad);
  n.value = atlas::matmul(node(a).value, node(b).value.transpose());
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "add");
  Node n(Op::Add, a.id, b.id, node(a).needs_grad || node(b).needs_grad);
  n.value = node(a).value + node(b).value;
  return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double factor) {
  Node n(Op::Scale, a.id, 0, node(a).needs_grad);
  n.value = node(a).value * factor;
  n.factor = factor;
  return push(std::move(n));
}

Tape::Var Tape::relu(Var a) {
  Node n(Op::Relu, a.id, 0, node(a).needs_grad);
  n.value = node(a).value.cwiseMax(0.0);
  return push(std::move(n));
}

Tape::Var Tape::softmax_rows(Var a) {
  Node n(Op::Softmax, a.id, 0, node(a).needs_grad);
  n.value = atlas::softmax_rows(node(a).value);
  return push(std::move(n));
}

Tape::Var Tape::layer_norm_rows(Var a, const Vector& gamma, const Vector& beta) {
  const Matrix& x = node(a).value;
  if (x.cols() < 2 || gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw DimensionError("layer_norm: width " + std::to_string(x.cols()) + ", gamma " + std::to_string(gamma.size()) +
                         ", beta " + std::to_string(beta.size()));
  }
  Node n(Op::LayerNorm, a.id, 0, node(a).needs_grad);
  n.saved = normalize_rows(x, &n.saved_vec);
  n.value = affine_rows(n.saved, gamma, beta);
  n.gamma = gamma.transpose();
  return push(std::move(n));
}

Tape::Var Tape::gather(Var a, GatherIndex index, Eigen::Index rows, Eigen::Index cols) {
  Node n(Op::Gather, a.id, 0, node(a).needs_grad);
  n.value = gather_values(node(a).value, index, rows, cols);
  n.index = std::move(index);
  n.p0 = node(a).value.rows();
  n.p1 = node(a).value.cols();
  return push(std::move(n));
}

Tape::Var Tape::mean_rows(Var a) {
  Node n(Op::MeanRows, a.id, 0, node(a).needs_grad);
  n.value = node(a).value.colwise().sum() / double(node(a).value.rows());
  return push(std::move(n));
}

Tape::Var Tape::reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  Node n(Op::Reshape, a.id, 0, node(a).needs_grad);
  n.value = reshape_values(node(a).value, rows, cols);
  n.p0 = node(a).value.rows();
  n.p1 = node(a).value.cols();
  return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  const Matrix& x = node(a).value;
  if (begin < 0 || count < 0 || begin + count > x.cols()) throw DimensionError("slice_cols: range out of bounds");
  Node n(Op::SliceCols, a.id, 0, node(a).needs_grad);
  n.value = x.middleCols(begin, count);
  n.p0 = begin;
  n.p1 = x.cols();
  return push(std::move(n));
}

Tape::Var Tape::apply(std::string_view primitive, Var a) {
  if (primitive == "relu") return relu(a);
  if (primitive == "softmax_rows") return softmax_rows(a);
  if (primitive == "mean_rows") return mean_rows(a);
  throw CapabilityError("unsupported primitive '" + std::string(primitive) + "'");
}

Matrix Tape::vjp(const Matrix& cotangent) const {
  if (nodes_.empty()) throw PreconditionError("vjp on an empty tape");
  require_same_shape(cotangent, nodes_[output_].value, "vjp cotangent");

  std::vector<Matrix> adj(output_ + 1);
  auto accumulate = [&](std::size_t target, Matrix grad) {
    if (!nodes_[target].needs_grad) return;
    if (adj[target].size() == 0) {
      adj[target] = std::move(grad);
    } else {
      adj[target] += grad;
    }
  };
  adj[output_] = cotangent;

  for (std::size_t i = output_ + 1; i-- > 0;) {
    if (adj[i].size() == 0) continue;
    const Node& n = nodes_[i];
    const Matrix& g = adj[i];
    switch (n.op) {
      case Op::Input:
      case Op::Constant:
        break;
      case Op::MatMul:
        if (nodes_[n.a].needs_grad) accumulate(n.a, g * nodes_[n.b].value.transpose());
        if (nodes_[n.b].needs_grad) accumulate(n.b, nodes_[n.a].value.transpose() * g);
        break;
      case Op::MatMulNT:
        if (nodes_[n.a].needs_grad) accumulate(n.a, g * nodes_[n.b].value);
        if (nodes_[n.b].needs_grad) accumulate(n.b, g.transpose() * nodes_[n.a].value);
        break;
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Scale:
        accumulate(n.a, g * n.factor);
        break;
      case Op::Relu: {
        // Subgradient at 0 is 0.
        const Matrix& x = nodes_[n.a].value;
        accumulate(n.a, (x.array() > 0.0).select(g, 0.0));
        break;
      }
      case Op::Softmax: {
        const Matrix& s = n.value;
        Matrix dx(s.rows(), s.cols());
        for (Eigen::Index r = 0; r < s.rows(); ++r) {
          const double inner = g.row(r).dot(s.row(r));
          dx.row(r) = s.row(r).cwiseProduct((g.row(r).array() - inner).matrix());
        }
        accumulate(n.a, std::move(dx));
        break;
      }
      case Op::LayerNorm: {
        const Matrix& xhat = n.saved;
        const double d = double(xhat.cols());
        Matrix dx(xhat.rows(), xhat.cols());
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
          const RowVector gh = g.row(r).cwiseProduct(n.gamma);
          const double mean_g = gh.sum() / d;
          const double mean_gx = gh.dot(xhat.row(r)) / d;
          dx.row(r) = n.saved_vec(r) * ((gh.array() - mean_g) - xhat.row(r).array() * mean_gx).matrix();
        }
        accumulate(n.a, std::move(dx));
        break;
      }
      case Op::Gather: {
        Matrix dx = Matrix::Zero(n.p0, n.p1);
        for (Eigen::Index k = 0; k < g.size(); ++k) dx.data()[(*n.index)[std::size_t(k)]] += g.data()[k];
        accumulate(n.a, std::move(dx));
        break;
      }
      case Op::MeanRows: {
        const Eigen::Index rows = nodes_[n.a].value.rows();
        accumulate(n.a, g.replicate(rows, 1) / double(rows));
        break;
      }
      case Op::Reshape:
        accumulate(n.a, reshape_values(g, n.p0, n.p1));
        break;
      case Op::SliceCols: {
        Matrix dx = Matrix::Zero(g.rows(), n.p1);
        dx.middleCols(n.p0, g.cols()) = g;
        accumulate(n.a, std::move(dx));
        break;
      }
    }
  }
  if (adj[input_].size() == 0) return Matrix::Zero(nodes_[input_].value.rows(), nodes_[input_].value.cols());
  return adj[input_];
}

Tape::LayerNormCheck Tape::check_layer_norms() const {
  LayerNormCheck check;
  for (const Node& n : nodes_) {
    if (n.op != Op::LayerNorm) continue;
    const double d = double(n.saved.cols());
    for (Eigen::Index r = 0; r < n.saved.rows(); ++r) {
      const double mean = n.saved.row(r).sum() / d;
      const double stddev = std::sqrt((n.saved.row(r).array() - mean).square().sum() / d);
      // inv_std = 1/sqrt(var + eps)  =>  var = 1/inv^2 - eps
      const double inv = n.saved_vec(r);
      const double var = 1.0 / (inv * inv) - kLayerNormEps;
      const double expected = std::sqrt(std::max(var, 0.0)) * inv;
      check.max_abs_mean = std::max(check.max_abs_mean, std::abs(mean));
      check.max_std_error = std::max(check.max_std_error, std::abs(stddev - expected));
    }
    ++check.count;
  }
  return check;
}

Vector vjp(const Tape& tape, const Vector& cotangent) {
  const Matrix& out = tape.output();
  if (cotangent.size() != out.size()) {
    throw DimensionError("vjp: cotangent length " + std::to_string(cotangent.size()) + " vs output size " +
                         std::to_string(out.size()));
  }
  const Matrix shaped = Eigen::Map<const Matrix>(cotangent.data(), out.rows(), out.cols());
  return flatten(tape.vjp(shaped));
}

Matrix jacobian(const Tape& tape) {
  const Eigen::Index n = tape.output().size();
  const Eigen::Index m = tape.input_value().size();
  Matrix jac(n, m);
  parallel_for(std::size_t(n), [&](std::size_t row) {
    Vector e = Vector::Zero(n);
    e(Eigen::Index(row)) = 1.0;
    jac.row(Eigen::Index(row)) = vjp(tape, e).transpose();
  });
  return jac;
}

namespace {

template <typename Graph>
typename Graph::Var linear_graph(Graph& g, typename Graph::Var x, const Matrix& a) {
  return g.matmul(g.constant(a), x);
}

} // namespace

Vector LinearModel::evaluate(const Vector& x) const {
  Eval g;
  return flatten(linear_graph(g, g.input(x), a_));
}

Tape LinearModel::record(const Vector& x) const {
  Tape tape;
  tape.set_output(linear_graph(tape, tape.input(x), a_));
  return tape;
}

} // namespace atlas
