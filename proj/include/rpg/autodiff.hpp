#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D matrix (vectors are r x 1 or 1 x c, scalars 1 x 1).
// Point sets are stored one point per column, so a per-point shared layer is
// W * X and pooling over points is a row-wise max.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rpg::ad {

enum class OpKind : int {
  Leaf = 0,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  Tanh,
  Sigmoid,
  LeakyRelu,
  Exp,
  Square,
  ColNorm,
  Concat,
  MaxReduce,
  Sum,
  Mean,
  GatherCols,
  GatherRows,
  Reshape,
  ClampMin,
};

const char* op_name(OpKind kind);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis selector for Concat and MaxReduce.
/// Rows: Concat stacks vertically, MaxReduce reduces each row to one value.
/// Cols: Concat stacks horizontally, MaxReduce reduces each column.
enum class Axis : int { Rows = 0, Cols = 1 };

/// Non-tensor arguments of a primitive.
struct OpAttrs {
  double constant = 0.0;
  Axis axis = Axis::Rows;
  std::vector<Eigen::Index> indices;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

inline constexpr double kLeakySlope = 0.2;

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
template <typename Scalar>
class Var {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const { return tape_->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }
  Tape<Scalar>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

/// Gradients produced by Tape::backward. Nodes the loss does not depend on
/// report zero matrices of the node's shape.
template <typename Scalar>
class Gradients {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Gradients(const Tape<Scalar>* tape, std::vector<Matrix> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  Matrix operator[](const Var<Scalar>& v) const {
    const Matrix& g = grads_.at(static_cast<std::size_t>(v.id()));
    if (g.size() == 0) return Matrix::Zero(v.rows(), v.cols());
    return g;
  }

  bool reached(const Var<Scalar>& v) const {
    return grads_.at(static_cast<std::size_t>(v.id())).size() != 0;
  }

 private:
  const Tape<Scalar>* tape_;
  std::vector<Matrix> grads_;
};

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << '(' << r << 'x' << c << ')';
  return os.str();
}

template <typename M>
[[noreturn]] void shape_fail(OpKind kind, const M& a, const M& b) {
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " +
                   shape_str(a.rows(), a.cols()) + " vs " +
                   shape_str(b.rows(), b.cols()));
}

template <typename M>
[[noreturn]] void shape_fail(OpKind kind, const M& a, const std::string& why) {
  throw ShapeError(std::string(op_name(kind)) + ": invalid shape " +
                   shape_str(a.rows(), a.cols()) + ", " + why);
}

template <typename M>
bool is_scalar(const M& m) {
  return m.rows() == 1 && m.cols() == 1;
}

inline int arity(OpKind kind) {
  switch (kind) {
    case OpKind::MatMul:
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Concat:
      return 2;
    case OpKind::Scale:
    case OpKind::Tanh:
    case OpKind::Sigmoid:
    case OpKind::LeakyRelu:
    case OpKind::Exp:
    case OpKind::Square:
    case OpKind::ColNorm:
    case OpKind::MaxReduce:
    case OpKind::Sum:
    case OpKind::Mean:
    case OpKind::GatherCols:
    case OpKind::GatherRows:
    case OpKind::Reshape:
    case OpKind::ClampMin:
      return 1;
    case OpKind::Leaf:
      return 0;
  }
  throw std::invalid_argument("unknown op kind " +
                              std::to_string(static_cast<int>(kind)));
}

// Elementwise binary op where either operand may be 1 x 1.
template <typename Scalar, typename F>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> broadcast_binary(
    OpKind kind, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& b, F f) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return a.binaryExpr(b, f);
  }
  if (is_scalar(b)) {
    const Scalar s = b(0, 0);
    return a.unaryExpr([&](Scalar x) { return f(x, s); });
  }
  if (is_scalar(a)) {
    const Scalar s = a(0, 0);
    return b.unaryExpr([&](Scalar x) { return f(s, x); });
  }
  shape_fail(kind, a, b);
  return Matrix();
}

// Reduces a broadcast gradient back to the operand's shape.
template <typename Matrix>
Matrix unbroadcast(const Matrix& grad, const Matrix& operand) {
  if (operand.rows() == grad.rows() && operand.cols() == grad.cols()) {
    return grad;
  }
  Matrix out(1, 1);
  out(0, 0) = grad.sum();
  return out;
}

// Every output entry is accumulated in increasing inner index, so a column of
// the result does not depend on the other columns of b or on the blocking
// a library GEMM would choose for the batch size.
template <typename Matrix>
Matrix ordered_matmul(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    auto col = out.col(j);
    for (Eigen::Index p = 0; p < a.cols(); ++p) col += b(p, j) * a.col(p);
  }
  return out;
}

template <typename Scalar>
Scalar upper_open_bound() {
  return std::nextafter(Scalar(1), Scalar(0));
}

}  // namespace detail

template <typename Scalar>
class Tape {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VarT = Var<Scalar>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  VarT leaf(Matrix value, bool requires_grad = true) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return VarT(this, static_cast<int>(nodes_.size()) - 1);
  }

  VarT constant(Matrix value) { return leaf(std::move(value), false); }

  /// Applies a primitive. The application is recorded only when some input
  /// requires a gradient; otherwise the result is stored as a constant.
  VarT apply(OpKind kind, std::span<const VarT> inputs, OpAttrs attrs = {}) {
    const int n_in = detail::arity(kind);
    if (kind == OpKind::Leaf) {
      throw std::invalid_argument("apply: leaf is not a primitive");
    }
    if (static_cast<int>(inputs.size()) != n_in) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": expected " +
                                  std::to_string(n_in) + " inputs, got " +
                                  std::to_string(inputs.size()));
    }
    Node n;
    n.kind = kind;
    n.attrs = std::move(attrs);
    bool grad = false;
    for (int i = 0; i < n_in; ++i) {
      if (inputs[i].tape() != this) {
        throw std::invalid_argument(std::string(op_name(kind)) +
                                    ": input belongs to another tape");
      }
      n.inputs[i] = inputs[i].id();
      grad = grad || nodes_[inputs[i].id()].requires_grad;
    }
    n.value = forward(n);
    if (!grad) {
      n.kind = OpKind::Leaf;
      n.inputs = {-1, -1};
      n.attrs = {};
    }
    n.requires_grad = grad;
    nodes_.push_back(std::move(n));
    return VarT(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix& value(const VarT& v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(const VarT& v) const {
    return nodes_.at(v.id()).requires_grad;
  }
  std::size_t size() const { return nodes_.size(); }

  /// Recomputes every recorded application from its inputs, in tape order.
  /// Returns false if any recomputed value differs bitwise from the stored one.
  bool replay() {
    bool identical = true;
    for (auto& n : nodes_) {
      if (n.kind == OpKind::Leaf) continue;
      Matrix again = forward(n);
      if (again.rows() != n.value.rows() || again.cols() != n.value.cols() ||
          std::memcmp(again.data(), n.value.data(),
                      sizeof(Scalar) * static_cast<std::size_t>(again.size())) != 0) {
        identical = false;
      }
      n.value = std::move(again);
    }
    return identical;
  }

  /// Reverse sweep from a 1 x 1 loss. The tape is not consumed; backward may
  /// be called repeatedly.
  Gradients<Scalar> backward(const VarT& loss) const {
    if (loss.tape() != this) {
      throw std::invalid_argument("backward: loss belongs to another tape");
    }
    const Node& ln = nodes_.at(loss.id());
    if (!detail::is_scalar(ln.value)) {
      throw ShapeError("backward: loss must be 1x1, got " +
                       detail::shape_str(ln.value.rows(), ln.value.cols()));
    }
    std::vector<Matrix> grads(nodes_.size());
    grads[loss.id()] = Matrix::Ones(1, 1);
    for (int id = loss.id(); id >= 0; --id) {
      const Node& n = nodes_[id];
      if (n.kind == OpKind::Leaf || !n.requires_grad) continue;
      if (grads[id].size() == 0) continue;
      propagate(n, grads[id], grads);
    }
    return Gradients<Scalar>(this, std::move(grads));
  }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::array<int, 2> inputs{-1, -1};
    Matrix value;
    bool requires_grad = false;
    OpAttrs attrs;
    std::vector<Eigen::Index> argmax;  // saved by MaxReduce
  };

  const Matrix& in(const Node& n, int i) const { return nodes_[n.inputs[i]].value; }

  Matrix forward(Node& n) const {
    using detail::shape_fail;
    const OpKind k = n.kind;
    switch (k) {
      case OpKind::MatMul: {
        const Matrix& a = in(n, 0);
        const Matrix& b = in(n, 1);
        if (a.cols() != b.rows()) shape_fail(k, a, b);
        return detail::ordered_matmul(a, b);
      }
      case OpKind::Add:
        return detail::broadcast_binary<Scalar>(k, in(n, 0), in(n, 1),
                                                [](Scalar x, Scalar y) { return x + y; });
      case OpKind::Sub:
        return detail::broadcast_binary<Scalar>(k, in(n, 0), in(n, 1),
                                                [](Scalar x, Scalar y) { return x - y; });
      case OpKind::Mul:
        return detail::broadcast_binary<Scalar>(k, in(n, 0), in(n, 1),
                                                [](Scalar x, Scalar y) { return x * y; });
      case OpKind::Div: {
        const Matrix& b = in(n, 1);
        if (!detail::is_scalar(b) && !detail::is_scalar(in(n, 0)) &&
            (b.rows() != in(n, 0).rows() || b.cols() != in(n, 0).cols())) {
          shape_fail(k, in(n, 0), b);
        }
        return detail::broadcast_binary<Scalar>(k, in(n, 0), b,
                                                [](Scalar x, Scalar y) { return x / y; });
      }
      case OpKind::Scale:
        return in(n, 0) * static_cast<Scalar>(n.attrs.constant);
      case OpKind::Tanh: {
        // Clamped one ulp inside (-1, 1) so the open range holds at any input.
        const Scalar hi = detail::upper_open_bound<Scalar>();
        return in(n, 0).unaryExpr([hi](Scalar x) { return std::clamp(std::tanh(x), -hi, hi); });
      }
      case OpKind::Sigmoid: {
        const Scalar hi = detail::upper_open_bound<Scalar>();
        const Scalar lo = std::numeric_limits<Scalar>::min();
        return in(n, 0)
            .unaryExpr([](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); })
            .array()
            .min(hi)
            .max(lo)
            .matrix();
      }
      case OpKind::LeakyRelu: {
        const Scalar slope = static_cast<Scalar>(n.attrs.constant);
        return in(n, 0).unaryExpr([slope](Scalar x) { return x > 0 ? x : slope * x; });
      }
      case OpKind::Exp:
        return in(n, 0).unaryExpr([](Scalar x) { return std::exp(x); });
      case OpKind::Square:
        return in(n, 0).array().square().matrix();
      case OpKind::ColNorm: {
        const Matrix& a = in(n, 0);
        Matrix out(1, a.cols());
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
          Scalar acc = 0;
          for (Eigen::Index i = 0; i < a.rows(); ++i) acc += a(i, j) * a(i, j);
          out(0, j) = std::sqrt(acc);
        }
        return out;
      }
      case OpKind::Concat: {
        const Matrix& a = in(n, 0);
        const Matrix& b = in(n, 1);
        if (n.attrs.axis == Axis::Rows) {
          if (a.cols() != b.cols()) shape_fail(k, a, b);
          Matrix out(a.rows() + b.rows(), a.cols());
          out << a, b;
          return out;
        }
        if (a.rows() != b.rows()) shape_fail(k, a, b);
        Matrix out(a.rows(), a.cols() + b.cols());
        out << a, b;
        return out;
      }
      case OpKind::MaxReduce: {
        const Matrix& a = in(n, 0);
        // Ties resolve to the lowest index.
        if (n.attrs.axis == Axis::Rows) {
          Matrix out(a.rows(), 1);
          n.argmax.assign(static_cast<std::size_t>(a.rows()), 0);
          for (Eigen::Index i = 0; i < a.rows(); ++i) {
            Eigen::Index best = 0;
            for (Eigen::Index j = 1; j < a.cols(); ++j)
              if (a(i, j) > a(i, best)) best = j;
            n.argmax[i] = best;
            out(i, 0) = a(i, best);
          }
          return out;
        }
        Matrix out(1, a.cols());
        n.argmax.assign(static_cast<std::size_t>(a.cols()), 0);
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
          Eigen::Index best = 0;
          for (Eigen::Index i = 1; i < a.rows(); ++i)
            if (a(i, j) > a(best, j)) best = i;
          n.argmax[j] = best;
          out(0, j) = a(best, j);
        }
        return out;
      }
      case OpKind::Sum: {
        Matrix out(1, 1);
        out(0, 0) = in(n, 0).sum();
        return out;
      }
      case OpKind::Mean: {
        Matrix out(1, 1);
        out(0, 0) = in(n, 0).mean();
        return out;
      }
      case OpKind::GatherCols: {
        const Matrix& a = in(n, 0);
        const auto& idx = n.attrs.indices;
        Matrix out(a.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
          if (idx[j] < 0 || idx[j] >= a.cols())
            shape_fail(k, a, "column index " + std::to_string(idx[j]) + " out of range");
          out.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
        }
        return out;
      }
      case OpKind::GatherRows: {
        const Matrix& a = in(n, 0);
        const auto& idx = n.attrs.indices;
        Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          if (idx[i] < 0 || idx[i] >= a.rows())
            shape_fail(k, a, "row index " + std::to_string(idx[i]) + " out of range");
          out.row(static_cast<Eigen::Index>(i)) = a.row(idx[i]);
        }
        return out;
      }
      case OpKind::Reshape: {
        const Matrix& a = in(n, 0);
        if (n.attrs.rows * n.attrs.cols != a.size())
          shape_fail(k, a, "cannot reshape to " +
                               detail::shape_str(n.attrs.rows, n.attrs.cols));
        return Eigen::Map<const Matrix>(a.data(), n.attrs.rows, n.attrs.cols);
      }
      case OpKind::ClampMin: {
        const Scalar floor = static_cast<Scalar>(n.attrs.constant);
        return in(n, 0).array().max(floor).matrix();
      }
      case OpKind::Leaf:
        break;
    }
    throw std::invalid_argument("unknown op kind " + std::to_string(static_cast<int>(k)));
  }

  void accumulate(std::vector<Matrix>& grads, int id, const Matrix& g) const {
    if (!nodes_[id].requires_grad) return;
    if (grads[id].size() == 0) {
      grads[id] = g;
    } else {
      grads[id] += g;
    }
  }

  void propagate(const Node& n, const Matrix& g, std::vector<Matrix>& grads) const {
    const int i0 = n.inputs[0];
    const int i1 = n.inputs[1];
    switch (n.kind) {
      case OpKind::MatMul: {
        const Matrix& a = in(n, 0);
        const Matrix& b = in(n, 1);
        if (nodes_[i0].requires_grad) accumulate(grads, i0, g * b.transpose());
        if (nodes_[i1].requires_grad) accumulate(grads, i1, a.transpose() * g);
        return;
      }
      case OpKind::Add:
        accumulate(grads, i0, detail::unbroadcast(g, in(n, 0)));
        accumulate(grads, i1, detail::unbroadcast(g, in(n, 1)));
        return;
      case OpKind::Sub:
        accumulate(grads, i0, detail::unbroadcast(g, in(n, 0)));
        accumulate(grads, i1, detail::unbroadcast(Matrix(-g), in(n, 1)));
        return;
      case OpKind::Mul: {
        const Matrix& a = in(n, 0);
        const Matrix& b = in(n, 1);
        if (nodes_[i0].requires_grad) {
          Matrix ga = detail::broadcast_binary<Scalar>(
              n.kind, g, b, [](Scalar x, Scalar y) { return x * y; });
          accumulate(grads, i0, detail::unbroadcast(ga, a));
        }
        if (nodes_[i1].requires_grad) {
          Matrix gb = detail::broadcast_binary<Scalar>(
              n.kind, g, a, [](Scalar x, Scalar y) { return x * y; });
          accumulate(grads, i1, detail::unbroadcast(gb, b));
        }
        return;
      }
      case OpKind::Div: {
        const Matrix& a = in(n, 0);
        const Matrix& b = in(n, 1);
        Matrix ga = detail::broadcast_binary<Scalar>(
            n.kind, g, b, [](Scalar x, Scalar y) { return x / y; });
        if (nodes_[i0].requires_grad) accumulate(grads, i0, detail::unbroadcast(ga, a));
        if (nodes_[i1].requires_grad) {
          // d(a/b)/db = -(a/b)/b
          Matrix gb = detail::broadcast_binary<Scalar>(
              n.kind, Matrix(-g.cwiseProduct(n.value)), b,
              [](Scalar x, Scalar y) { return x / y; });
          accumulate(grads, i1, detail::unbroadcast(gb, b));
        }
        return;
      }
      case OpKind::Scale:
        accumulate(grads, i0, g * static_cast<Scalar>(n.attrs.constant));
        return;
      case OpKind::Tanh:
        accumulate(grads, i0,
                   g.cwiseProduct((Scalar(1) - n.value.array().square()).matrix()));
        return;
      case OpKind::Sigmoid:
        accumulate(grads, i0,
                   g.cwiseProduct((n.value.array() * (Scalar(1) - n.value.array())).matrix()));
        return;
      case OpKind::LeakyRelu: {
        const Scalar slope = static_cast<Scalar>(n.attrs.constant);
        const Matrix& x = in(n, 0);
        accumulate(grads, i0, g.binaryExpr(x, [slope](Scalar gi, Scalar xi) {
          return xi > 0 ? gi : slope * gi;
        }));
        return;
      }
      case OpKind::Exp:
        accumulate(grads, i0, g.cwiseProduct(n.value));
        return;
      case OpKind::Square:
        accumulate(grads, i0, Scalar(2) * g.cwiseProduct(in(n, 0)));
        return;
      case OpKind::ColNorm: {
        const Matrix& x = in(n, 0);
        Matrix gx(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
          const Scalar norm = n.value(0, j);
          if (norm > 0) {
            gx.col(j) = x.col(j) * (g(0, j) / norm);
          } else {
            gx.col(j).setZero();
          }
        }
        accumulate(grads, i0, gx);
        return;
      }
      case OpKind::Concat: {
        const Matrix& a = in(n, 0);
        const Matrix& b = in(n, 1);
        if (n.attrs.axis == Axis::Rows) {
          accumulate(grads, i0, g.topRows(a.rows()));
          accumulate(grads, i1, g.bottomRows(b.rows()));
        } else {
          accumulate(grads, i0, g.leftCols(a.cols()));
          accumulate(grads, i1, g.rightCols(b.cols()));
        }
        return;
      }
      case OpKind::MaxReduce: {
        const Matrix& a = in(n, 0);
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        if (n.attrs.axis == Axis::Rows) {
          for (Eigen::Index i = 0; i < a.rows(); ++i) ga(i, n.argmax[i]) = g(i, 0);
        } else {
          for (Eigen::Index j = 0; j < a.cols(); ++j) ga(n.argmax[j], j) = g(0, j);
        }
        accumulate(grads, i0, ga);
        return;
      }
      case OpKind::Sum: {
        const Matrix& a = in(n, 0);
        accumulate(grads, i0, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
        return;
      }
      case OpKind::Mean: {
        const Matrix& a = in(n, 0);
        accumulate(grads, i0,
                   Matrix::Constant(a.rows(), a.cols(),
                                    g(0, 0) / static_cast<Scalar>(a.size())));
        return;
      }
      case OpKind::GatherCols: {
        const Matrix& a = in(n, 0);
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        const auto& idx = n.attrs.indices;
        for (std::size_t j = 0; j < idx.size(); ++j)
          ga.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
        accumulate(grads, i0, ga);
        return;
      }
      case OpKind::GatherRows: {
        const Matrix& a = in(n, 0);
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        const auto& idx = n.attrs.indices;
        for (std::size_t i = 0; i < idx.size(); ++i)
          ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        accumulate(grads, i0, ga);
        return;
      }
      case OpKind::Reshape: {
        const Matrix& a = in(n, 0);
        accumulate(grads, i0, Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols()));
        return;
      }
      case OpKind::ClampMin: {
        const Scalar floor = static_cast<Scalar>(n.attrs.constant);
        accumulate(grads, i0, g.binaryExpr(in(n, 0), [floor](Scalar gi, Scalar xi) {
          return xi > floor ? gi : Scalar(0);
        }));
        return;
      }
      case OpKind::Leaf:
        return;
    }
  }

  std::vector<Node> nodes_;
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Exp: return "exp";
    case OpKind::Square: return "square";
    case OpKind::ColNorm: return "col_norm";
    case OpKind::Concat: return "concat";
    case OpKind::MaxReduce: return "max_reduce";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::GatherCols: return "gather_cols";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::Reshape: return "reshape";
    case OpKind::ClampMin: return "clamp_min";
  }
  return "unknown";
}

// Free-function front end. All operands must live on the same tape.

template <typename Scalar>
Var<Scalar> apply_primitive(OpKind kind, std::span<const Var<Scalar>> inputs,
                            OpAttrs attrs = {}) {
  if (inputs.empty()) throw std::invalid_argument("apply_primitive: no inputs");
  return inputs.front().tape()->apply(kind, inputs, std::move(attrs));
}

namespace detail {
template <typename Scalar>
Var<Scalar> unary(OpKind kind, const Var<Scalar>& a, OpAttrs attrs = {}) {
  const std::array<Var<Scalar>, 1> ins{a};
  return a.tape()->apply(kind, ins, std::move(attrs));
}
template <typename Scalar>
Var<Scalar> binary(OpKind kind, const Var<Scalar>& a, const Var<Scalar>& b,
                   OpAttrs attrs = {}) {
  const std::array<Var<Scalar>, 2> ins{a, b};
  return a.tape()->apply(kind, ins, std::move(attrs));
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(OpKind::MatMul, a, b);
}
template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(OpKind::Add, a, b);
}
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(OpKind::Sub, a, b);
}
/// Elementwise product; either side may be 1 x 1.
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(OpKind::Mul, a, b);
}
template <typename Scalar>
Var<Scalar> operator/(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(OpKind::Div, a, b);
}
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, double c) {
  OpAttrs at;
  at.constant = c;
  return detail::unary(OpKind::Scale, a, std::move(at));
}
template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  return detail::unary(OpKind::Tanh, a);
}
template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  return detail::unary(OpKind::Sigmoid, a);
}
template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, double slope = kLeakySlope) {
  OpAttrs at;
  at.constant = slope;
  return detail::unary(OpKind::LeakyRelu, a, std::move(at));
}
template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  return detail::unary(OpKind::Exp, a);
}
template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  return detail::unary(OpKind::Square, a);
}
/// Euclidean norm of every column: (r x c) -> (1 x c).
template <typename Scalar>
Var<Scalar> col_norm(const Var<Scalar>& a) {
  return detail::unary(OpKind::ColNorm, a);
}
template <typename Scalar>
Var<Scalar> concat(const Var<Scalar>& a, const Var<Scalar>& b, Axis axis) {
  OpAttrs at;
  at.axis = axis;
  return detail::binary(OpKind::Concat, a, b, std::move(at));
}
/// Axis::Rows: (r x c) -> (r x 1), max of each row.
/// Axis::Cols: (r x c) -> (1 x c), max of each column.
template <typename Scalar>
Var<Scalar> max_reduce(const Var<Scalar>& a, Axis axis = Axis::Rows) {
  OpAttrs at;
  at.axis = axis;
  return detail::unary(OpKind::MaxReduce, a, std::move(at));
}
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  return detail::unary(OpKind::Sum, a);
}
template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return detail::unary(OpKind::Mean, a);
}
template <typename Scalar>
Var<Scalar> gather_cols(const Var<Scalar>& a, std::vector<Eigen::Index> indices) {
  OpAttrs at;
  at.indices = std::move(indices);
  return detail::unary(OpKind::GatherCols, a, std::move(at));
}
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& a, std::vector<Eigen::Index> indices) {
  OpAttrs at;
  at.indices = std::move(indices);
  return detail::unary(OpKind::GatherRows, a, std::move(at));
}
/// Column-major reshape.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
  OpAttrs at;
  at.rows = rows;
  at.cols = cols;
  return detail::unary(OpKind::Reshape, a, std::move(at));
}
template <typename Scalar>
Var<Scalar> clamp_min(const Var<Scalar>& a, double floor) {
  OpAttrs at;
  at.constant = floor;
  return detail::unary(OpKind::ClampMin, a, std::move(at));
}

/// Repeats a column vector `count` times: (r x 1) -> (r x count).
template <typename Scalar>
Var<Scalar> repeat_col(const Var<Scalar>& a, Eigen::Index count) {
  return gather_cols(a, std::vector<Eigen::Index>(static_cast<std::size_t>(count), 0));
}

}  // namespace rpg::ad
