#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mmt/types.hpp"

namespace mmt::ad {

template <typename Scalar>
class Tape;

/// Lightweight handle to a node on a Tape. Copyable; valid as long as the
/// tape lives. A default-constructed Var is null.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const MatT<Scalar>& value() const { return tape->val(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Eager reverse-mode tape over dense row-major matrices.
///
/// Values are computed when an op is recorded; backward() replays the
/// recorded closures in reverse creation order, which is a reverse
/// topological order by construction (an op can only reference nodes that
/// already exist). Gradients accumulate with +=, so a node consumed by
/// several ops (shared parameters) receives the summed contribution.
/// Nodes never reach into later nodes, so independent tapes are safe to
/// run on separate threads; a single tape is single-threaded.
template <typename Scalar>
class Tape {
 public:
  using Mat = MatT<Scalar>;
  using V = Var<Scalar>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf referencing external storage (parameters). The caller keeps the
  /// matrix alive and unchanged for the lifetime of the tape.
  V param(const Mat& external) {
    Node n;
    n.ext = &external;
    nodes_.push_back(std::move(n));
    return V{this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Leaf owning its value (inputs, constants).
  V value(Mat v) {
    Node n;
    n.val = std::move(v);
    nodes_.push_back(std::move(n));
    return V{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& val(V v) const { return raw_val(v.id); }

  /// Gradient of a node after backward(). Zero matrix for nodes the loss
  /// does not depend on. References stay valid while the tape lives.
  const Mat& grad(V v) {
    Node& n = nodes_.at(v.id);
    if (!n.touched) {
      n.grad = Mat::Zero(raw_val(v.id).rows(), raw_val(v.id).cols());
    }
    return n.grad;
  }

  /// Record a node with an explicit backward closure. The closure receives
  /// the tape and the node's own id, reads grad_of(self) and accumulates
  /// into its inputs via grad_ref(). Exposed so callers can extend the op
  /// set (and tests can inject deliberately wrong rules).
  V node(Mat value, std::vector<int> inputs,
         std::function<void(Tape&, int)> back, const char* opname) {
    for (int i : inputs) {
      if (i < 0 || i >= static_cast<int>(nodes_.size())) {
        throw Error(std::string(opname) +
                    ": input does not precede the node (cycle or bad handle)");
      }
    }
    check_finite(value, opname);
    Node n;
    n.val = std::move(value);
    n.inputs = std::move(inputs);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return V{this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Reverse pass from a scalar loss. Gradients of all earlier nodes are
  /// available through grad() afterwards.
  void backward(V loss) {
    if (loss.tape != this) throw Error("backward: loss from another tape");
    const Mat& lv = raw_val(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("backward: loss must be scalar, got " +
                       shape_str(lv));
    }
    for (Node& n : nodes_) n.touched = false;
    Node& ln = nodes_[loss.id];
    ln.grad = Mat::Ones(1, 1);
    ln.touched = true;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.touched || !n.back) continue;
      n.back(*this, i);
    }
  }

  /// Accumulation target for backward closures.
  Mat& grad_ref(int id) {
    Node& n = nodes_[id];
    if (!n.touched) {
      n.grad = Mat::Zero(raw_val(id).rows(), raw_val(id).cols());
      n.touched = true;
    }
    return n.grad;
  }

  const Mat& grad_of(int id) const { return nodes_[id].grad; }
  const Mat& val_of(int id) const { return raw_val(id); }

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat val;
    const Mat* ext = nullptr;
    Mat grad;
    bool touched = false;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> back;
  };

  const Mat& raw_val(int id) const {
    const Node& n = nodes_.at(id);
    return n.ext ? *n.ext : n.val;
  }

  // deque keeps value/grad references stable as nodes are appended
  std::deque<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void same_tape(Var<Scalar> a, Var<Scalar> b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw Error(std::string(op) + ": operands from different tapes");
  }
}

template <typename Scalar>
void same_shape(Var<Scalar> a, Var<Scalar> b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}

template <typename Scalar>
void require_vector(Var<Scalar> v, const char* op) {
  if (v.rows() != 1 && v.cols() != 1) {
    throw ShapeError(std::string(op) + ": expected a vector, got " +
                     shape_str(v.value()));
  }
  if (v.value().size() == 0) {
    throw ShapeError(std::string(op) + ": empty input");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Op set. Free functions recording onto the operands' tape. operator* is the
// matrix product (Eigen convention); use cmul for the elementwise product.
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::same_tape(a, b, "matmul");
  Tape<Scalar>& t = *a.tape;
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents disagree: " +
                     shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  MatT<Scalar> out = a.value() * b.value();
  int ia = a.id, ib = b.id;
  return t.node(
      std::move(out), {ia, ib},
      [ia, ib](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        tp.grad_ref(ia).noalias() += g * tp.val_of(ib).transpose();
        tp.grad_ref(ib).noalias() += tp.val_of(ia).transpose() * g;
      },
      "matmul");
}

template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) {
  return matmul(a, b);
}

/// Same-shape addition, or the one allowed broadcast: adding a 1xC row
/// vector to every row of an RxC matrix (bias pattern). Anything fancier is
/// a shape error.
template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::same_tape(a, b, "add");
  Tape<Scalar>& t = *a.tape;
  int ia = a.id, ib = b.id;
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return t.node(
        a.value() + b.value(), {ia, ib},
        [ia, ib](Tape<Scalar>& tp, int self) {
          const auto& g = tp.grad_of(self);
          tp.grad_ref(ia) += g;
          tp.grad_ref(ib) += g;
        },
        "add");
  }
  if (b.rows() == 1 && b.cols() == a.cols() && a.rows() > 1) {
    return t.node(
        a.value().rowwise() + b.value().row(0), {ia, ib},
        [ia, ib](Tape<Scalar>& tp, int self) {
          const auto& g = tp.grad_of(self);
          tp.grad_ref(ia) += g;
          tp.grad_ref(ib).row(0) += g.colwise().sum();
        },
        "add");
  }
  throw ShapeError("add: shape mismatch " + shape_str(a.value()) + " vs " +
                   shape_str(b.value()));
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  return add(a, b);
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::same_tape(a, b, "sub");
  detail::same_shape(a, b, "sub");
  Tape<Scalar>& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.node(
      a.value() - b.value(), {ia, ib},
      [ia, ib](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        tp.grad_ref(ia) += g;
        tp.grad_ref(ib) -= g;
      },
      "sub");
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  return sub(a, b);
}

/// Elementwise (Hadamard) product.
template <typename Scalar>
Var<Scalar> cmul(Var<Scalar> a, Var<Scalar> b) {
  detail::same_tape(a, b, "cmul");
  detail::same_shape(a, b, "cmul");
  Tape<Scalar>& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.node(
      a.value().cwiseProduct(b.value()), {ia, ib},
      [ia, ib](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        tp.grad_ref(ia) += g.cwiseProduct(tp.val_of(ib));
        tp.grad_ref(ib) += g.cwiseProduct(tp.val_of(ia));
      },
      "cmul");
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar c) {
  Tape<Scalar>& t = *a.tape;
  int ia = a.id;
  return t.node(
      (a.value().array() * c).matrix(), {ia},
      [ia, c](Tape<Scalar>& tp, int self) {
        tp.grad_ref(ia) += (tp.grad_of(self).array() * c).matrix();
      },
      "scale");
}

template <typename Scalar>
Var<Scalar> operator*(Scalar c, Var<Scalar> a) {
  return scale(a, c);
}

/// 1 - a, elementwise.
template <typename Scalar>
Var<Scalar> one_minus(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  int ia = a.id;
  return t.node(
      (Scalar(1) - a.value().array()).matrix(), {ia},
      [ia](Tape<Scalar>& tp, int self) {
        tp.grad_ref(ia) -= tp.grad_of(self);
      },
      "one_minus");
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  int ia = a.id;
  MatT<Scalar> y = a.value().array().tanh().matrix();
  return t.node(
      std::move(y), {ia},
      [ia](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        const auto& y = tp.val_of(self);
        tp.grad_ref(ia).array() +=
            g.array() * (Scalar(1) - y.array().square());
      },
      "tanh");
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  int ia = a.id;
  // Branch on sign for stability at large |x|.
  MatT<Scalar> y = a.value().unaryExpr([](Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
  });
  return t.node(
      std::move(y), {ia},
      [ia](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        const auto& y = tp.val_of(self);
        tp.grad_ref(ia).array() +=
            g.array() * y.array() * (Scalar(1) - y.array());
      },
      "sigmoid");
}

namespace detail {

template <typename Scalar>
MatT<Scalar> stable_softmax(const MatT<Scalar>& v) {
  MatT<Scalar> y = ((v.array() - v.maxCoeff()).exp()).matrix();
  return y / y.sum();
}

}  // namespace detail

/// Softmax over a vector (1xN or Nx1), max-subtracted for stability.
template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> v) {
  detail::require_vector(v, "softmax");
  Tape<Scalar>& t = *v.tape;
  int iv = v.id;
  return t.node(
      detail::stable_softmax(v.value()), {iv},
      [iv](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        const auto& y = tp.val_of(self);
        Scalar dot = (g.array() * y.array()).sum();
        tp.grad_ref(iv).array() += y.array() * (g.array() - dot);
      },
      "softmax");
}

/// Softmax restricted to entries with keep[i] != 0; dropped entries get
/// probability exactly 0 and receive zero gradient.
template <typename Scalar>
Var<Scalar> masked_softmax(Var<Scalar> v, std::vector<std::uint8_t> keep) {
  detail::require_vector(v, "masked_softmax");
  if (static_cast<Eigen::Index>(keep.size()) != v.value().size()) {
    throw ShapeError("masked_softmax: mask length " +
                     std::to_string(keep.size()) + " vs vector " +
                     shape_str(v.value()));
  }
  bool any = false;
  for (auto k : keep) any = any || (k != 0);
  if (!any) throw ShapeError("masked_softmax: all positions masked");

  Tape<Scalar>& t = *v.tape;
  const MatT<Scalar>& x = v.value();
  Scalar mx = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (keep[i]) mx = std::max(mx, x(i));
  }
  MatT<Scalar> y = MatT<Scalar>::Zero(x.rows(), x.cols());
  Scalar z = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (keep[i]) {
      y(i) = std::exp(x(i) - mx);
      z += y(i);
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) y(i) /= z;
  int iv = v.id;
  return t.node(
      std::move(y), {iv},
      [iv, keep = std::move(keep)](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        const auto& y = tp.val_of(self);
        Scalar dot = 0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          if (keep[i]) dot += g(i) * y(i);
        }
        auto& gx = tp.grad_ref(iv);
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          if (keep[i]) gx(i) += y(i) * (g(i) - dot);
        }
      },
      "masked_softmax");
}

/// Log-softmax over a vector; avoids log(0) by construction.
template <typename Scalar>
Var<Scalar> log_softmax(Var<Scalar> v) {
  detail::require_vector(v, "log_softmax");
  Tape<Scalar>& t = *v.tape;
  const MatT<Scalar>& x = v.value();
  Scalar mx = x.maxCoeff();
  Scalar lse = mx + std::log((x.array() - mx).exp().sum());
  int iv = v.id;
  return t.node(
      (x.array() - lse).matrix(), {iv},
      [iv](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        const auto& y = tp.val_of(self);
        Scalar gsum = g.sum();
        tp.grad_ref(iv).array() += g.array() - y.array().exp() * gsum;
      },
      "log_softmax");
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  int ia = a.id;
  return t.node(
      a.value().transpose(), {ia},
      [ia](Tape<Scalar>& tp, int self) {
        tp.grad_ref(ia) += tp.grad_of(self).transpose();
      },
      "transpose");
}

/// Single row as a 1xC vector (embedding lookup). Gradient scatters into
/// the source row, accumulating across repeated reads.
template <typename Scalar>
Var<Scalar> row(Var<Scalar> a, int i) {
  Tape<Scalar>& t = *a.tape;
  if (i < 0 || i >= a.rows()) {
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                     shape_str(a.value()));
  }
  int ia = a.id;
  return t.node(
      a.value().row(i), {ia},
      [ia, i](Tape<Scalar>& tp, int self) {
        tp.grad_ref(ia).row(i) += tp.grad_of(self).row(0);
      },
      "row");
}

/// Gather rows by index list.
template <typename Scalar>
Var<Scalar> rows(Var<Scalar> a, std::vector<int> idx) {
  Tape<Scalar>& t = *a.tape;
  MatT<Scalar> out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= a.rows()) {
      throw ShapeError("rows: index " + std::to_string(idx[k]) +
                       " out of range for " + shape_str(a.value()));
    }
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(idx[k]);
  }
  int ia = a.id;
  return t.node(
      std::move(out), {ia},
      [ia, idx = std::move(idx)](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        auto& ga = tp.grad_ref(ia);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
        }
      },
      "rows");
}

/// Element j of a vector as a 1x1 scalar.
template <typename Scalar>
Var<Scalar> pick(Var<Scalar> v, int j) {
  detail::require_vector(v, "pick");
  if (j < 0 || j >= v.value().size()) {
    throw ShapeError("pick: index " + std::to_string(j) +
                     " out of range for " + shape_str(v.value()));
  }
  Tape<Scalar>& t = *v.tape;
  MatT<Scalar> out(1, 1);
  out(0, 0) = v.value()(j);
  int iv = v.id;
  return t.node(
      std::move(out), {iv},
      [iv, j](Tape<Scalar>& tp, int self) {
        tp.grad_ref(iv)(j) += tp.grad_of(self)(0, 0);
      },
      "pick");
}

/// Sum of all entries as a 1x1 scalar.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  MatT<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  int ia = a.id;
  return t.node(
      std::move(out), {ia},
      [ia](Tape<Scalar>& tp, int self) {
        tp.grad_ref(ia).array() += tp.grad_of(self)(0, 0);
      },
      "sum");
}

/// Column-wise mean over rows: RxC -> 1xC.
template <typename Scalar>
Var<Scalar> mean_rows(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  if (a.rows() < 1) throw ShapeError("mean_rows: empty input");
  int ia = a.id;
  Scalar inv = Scalar(1) / static_cast<Scalar>(a.rows());
  return t.node(
      a.value().colwise().mean(), {ia},
      [ia, inv](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        tp.grad_ref(ia).rowwise() += (g.row(0).array() * inv).matrix();
      },
      "mean_rows");
}

/// Stack 1xC rows into a KxC matrix.
template <typename Scalar>
Var<Scalar> stack_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("stack_rows: empty input");
  Tape<Scalar>& t = *parts[0].tape;
  Eigen::Index c = parts[0].cols();
  MatT<Scalar> out(static_cast<Eigen::Index>(parts.size()), c);
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    detail::same_tape(parts[0], parts[k], "stack_rows");
    if (parts[k].rows() != 1 || parts[k].cols() != c) {
      throw ShapeError("stack_rows: part " + std::to_string(k) + " is " +
                       shape_str(parts[k].value()) + ", want 1x" +
                       std::to_string(c));
    }
    out.row(static_cast<Eigen::Index>(k)) = parts[k].value().row(0);
    ids.push_back(parts[k].id);
  }
  return t.node(
      std::move(out), ids,
      [ids](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          tp.grad_ref(ids[k]).row(0) += g.row(static_cast<Eigen::Index>(k));
        }
      },
      "stack_rows");
}

/// Horizontal concatenation of equal-height blocks.
template <typename Scalar>
Var<Scalar> concat_cols(Var<Scalar> a, Var<Scalar> b) {
  detail::same_tape(a, b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ: " +
                     shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
  Tape<Scalar>& t = *a.tape;
  MatT<Scalar> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  int ia = a.id, ib = b.id;
  Eigen::Index ca = a.cols(), cb = b.cols();
  return t.node(
      std::move(out), {ia, ib},
      [ia, ib, ca, cb](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_of(self);
        tp.grad_ref(ia) += g.leftCols(ca);
        tp.grad_ref(ib) += g.rightCols(cb);
      },
      "concat_cols");
}

}  // namespace mmt::ad
