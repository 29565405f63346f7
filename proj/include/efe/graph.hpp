#pragma once

// Reverse-mode autodiff over Tensor<Scalar>. A forward pass builds a DAG of
// shared_ptr-owned nodes; backward() topologically sorts from the loss root
// and pushes gradients into parents. Leaves created with parameter() persist
// across steps and accumulate into their grad tensors.
//
// Layer ops (conv3d, batch norm) live in conv.hpp; this header holds the
// generic tensor ops.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "efe/tensor.hpp"

namespace efe::ad {

template <typename S>
class Node;

template <typename S>
using NodePtr = std::shared_ptr<Node<S>>;

// Thread-local gradient switch; ops built while disabled never require grad.
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(std::exchange(grad_enabled(), false)) {}
  ~NoGradGuard() { grad_enabled() = prev; }
};

template <typename S>
class Node {
 public:
  Tensor<S> value;
  Tensor<S> grad;  // allocated on first accumulate
  bool requires_grad = false;
  std::vector<NodePtr<S>> parents;

  Node() = default;
  explicit Node(Tensor<S> v, std::vector<NodePtr<S>> ps = {}) : value(std::move(v)), parents(std::move(ps)) {
    if (grad_enabled()) {
      for (const auto& p : parents) requires_grad = requires_grad || p->requires_grad;
    }
  }
  virtual ~Node() = default;

  // Pushes this->grad into parents' grads.
  virtual void push_grad() {}

  void ensure_grad() {
    if (grad.size() == 0) grad = Tensor<S>(value.shape());
  }
  void zero_grad() { grad = Tensor<S>(); }

  template <typename Expr>
  void accumulate(const Expr& g) {
    ensure_grad();
    grad.array() += g;
  }
};

template <typename S>
NodePtr<S> constant(Tensor<S> v) {
  return std::make_shared<Node<S>>(std::move(v));
}

template <typename S>
NodePtr<S> parameter(Tensor<S> v) {
  auto n = std::make_shared<Node<S>>(std::move(v));
  n->requires_grad = true;
  return n;
}

// Detached copy of a node's value.
template <typename S>
NodePtr<S> detach(const NodePtr<S>& x) {
  return constant(x->value);
}

template <typename S>
void backward(const NodePtr<S>& root) {
  EFE_CHECK(root->value.size() == 1, "backward() requires a scalar root");
  // Iterative post-order DFS over grad-requiring nodes.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, size_t>> stack;
  if (root->requires_grad) stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.array().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->push_grad();
}

// ---------------------------------------------------------------------------
// elementwise and matrix ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename S, typename Fwd, typename Bwd>
class Elementwise : public Node<S> {
 public:
  Elementwise(const NodePtr<S>& x, Fwd fwd, Bwd bwd)
      : Node<S>(Tensor<S>(x->value.shape(), fwd(x->value.array())), {x}), bwd_(std::move(bwd)) {}
  void push_grad() override {
    auto& p = this->parents[0];
    if (p->requires_grad) p->accumulate(bwd_(p->value.array(), this->value.array()) * this->grad.array());
  }

 private:
  Bwd bwd_;
};

template <typename S, typename Fwd, typename Bwd>
NodePtr<S> elementwise(const NodePtr<S>& x, Fwd fwd, Bwd bwd) {
  return std::make_shared<Elementwise<S, Fwd, Bwd>>(x, std::move(fwd), std::move(bwd));
}

}  // namespace detail

template <typename S>
class AddNode : public Node<S> {
 public:
  AddNode(NodePtr<S> a, NodePtr<S> b)
      : Node<S>(Tensor<S>(a->value.shape(), a->value.array() + b->value.array()), {a, b}) {
    EFE_CHECK(a->value.same_shape(b->value), "add: shape mismatch");
  }
  void push_grad() override {
    for (auto& p : this->parents)
      if (p->requires_grad) p->accumulate(this->grad.array());
  }
};

template <typename S>
class SubNode : public Node<S> {
 public:
  SubNode(NodePtr<S> a, NodePtr<S> b)
      : Node<S>(Tensor<S>(a->value.shape(), a->value.array() - b->value.array()), {a, b}) {
    EFE_CHECK(a->value.same_shape(b->value), "sub: shape mismatch");
  }
  void push_grad() override {
    if (this->parents[0]->requires_grad) this->parents[0]->accumulate(this->grad.array());
    if (this->parents[1]->requires_grad) this->parents[1]->accumulate(-this->grad.array());
  }
};

template <typename S>
class MulNode : public Node<S> {
 public:
  MulNode(NodePtr<S> a, NodePtr<S> b)
      : Node<S>(Tensor<S>(a->value.shape(), a->value.array() * b->value.array()), {a, b}) {
    EFE_CHECK(a->value.same_shape(b->value), "mul: shape mismatch");
  }
  void push_grad() override {
    if (this->parents[0]->requires_grad)
      this->parents[0]->accumulate(this->parents[1]->value.array() * this->grad.array());
    if (this->parents[1]->requires_grad)
      this->parents[1]->accumulate(this->parents[0]->value.array() * this->grad.array());
  }
};

template <typename S>
NodePtr<S> add(NodePtr<S> a, NodePtr<S> b) {
  return std::make_shared<AddNode<S>>(std::move(a), std::move(b));
}
template <typename S>
NodePtr<S> sub(NodePtr<S> a, NodePtr<S> b) {
  return std::make_shared<SubNode<S>>(std::move(a), std::move(b));
}
template <typename S>
NodePtr<S> mul(NodePtr<S> a, NodePtr<S> b) {
  return std::make_shared<MulNode<S>>(std::move(a), std::move(b));
}

template <typename S>
NodePtr<S> scale(NodePtr<S> x, S c) {
  return detail::elementwise(
      std::move(x), [c](const auto& v) { return v * c; },
      [c](const auto& xv, const auto&) { return xv * S(0) + c; });
}

template <typename S>
NodePtr<S> add_const(NodePtr<S> x, S c) {
  return detail::elementwise(
      std::move(x), [c](const auto& v) { return v + c; },
      [](const auto& xv, const auto&) { return xv * S(0) + S(1); });
}

template <typename S>
NodePtr<S> relu(NodePtr<S> x) {
  return detail::elementwise(
      std::move(x), [](const auto& v) { return v.max(S(0)); },
      [](const auto& xv, const auto&) { return (xv > S(0)).template cast<S>(); });
}

template <typename S>
NodePtr<S> sigmoid(NodePtr<S> x) {
  return detail::elementwise(
      std::move(x), [](const auto& v) { return S(1) / (S(1) + (-v).exp()); },
      [](const auto&, const auto& yv) { return yv * (S(1) - yv); });
}

template <typename S>
NodePtr<S> exp_(NodePtr<S> x) {
  return detail::elementwise(
      std::move(x), [](const auto& v) { return v.exp(); }, [](const auto&, const auto& yv) { return yv; });
}

// ln(max(x, eps)); gradient is zero where the floor is active.
template <typename S>
NodePtr<S> log_floor(NodePtr<S> x, S eps) {
  return detail::elementwise(
      std::move(x), [eps](const auto& v) { return v.max(eps).log(); },
      [eps](const auto& xv, const auto&) { return (xv > eps).template cast<S>() / xv.max(eps); });
}

template <typename S>
NodePtr<S> square(NodePtr<S> x) {
  return detail::elementwise(
      std::move(x), [](const auto& v) { return v.square(); }, [](const auto& xv, const auto&) { return S(2) * xv; });
}

template <typename S>
NodePtr<S> sqrt_(NodePtr<S> x) {
  return detail::elementwise(
      std::move(x), [](const auto& v) { return v.sqrt(); },
      [](const auto&, const auto& yv) { return S(0.5) / yv; });
}

template <typename S>
class MatMulNode : public Node<S> {
 public:
  MatMulNode(NodePtr<S> a, NodePtr<S> b) : Node<S>() {
    EFE_CHECK(a->value.ndim() == 2 && b->value.ndim() == 2 && a->value.dim(1) == b->value.dim(0),
              "matmul: incompatible shapes " + shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()));
    this->parents = {a, b};
    if (grad_enabled()) this->requires_grad = a->requires_grad || b->requires_grad;
    this->value = Tensor<S>({a->value.dim(0), b->value.dim(1)});
    this->value.matrix().noalias() = a->value.matrix() * b->value.matrix();
  }
  void push_grad() override {
    auto& a = this->parents[0];
    auto& b = this->parents[1];
    auto g = this->grad.matrix();
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.matrix().noalias() += g * b->value.matrix().transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.matrix().noalias() += a->value.matrix().transpose() * g;
    }
  }
};

template <typename S>
NodePtr<S> matmul(NodePtr<S> a, NodePtr<S> b) {
  return std::make_shared<MatMulNode<S>>(std::move(a), std::move(b));
}

// (B,F) + bias(F) broadcast over rows.
template <typename S>
class AddRowNode : public Node<S> {
 public:
  AddRowNode(NodePtr<S> x, NodePtr<S> bias) : Node<S>() {
    EFE_CHECK(x->value.ndim() == 2 && bias->value.size() == x->value.dim(1), "add_row: bias length mismatch");
    this->parents = {x, bias};
    if (grad_enabled()) this->requires_grad = x->requires_grad || bias->requires_grad;
    this->value = Tensor<S>(x->value.shape());
    this->value.matrix() = x->value.matrix();
    this->value.matrix().rowwise() += Eigen::Map<const Eigen::RowVectorX<S>>(bias->value.data(), bias->value.size());
  }
  void push_grad() override {
    auto& x = this->parents[0];
    auto& bias = this->parents[1];
    if (x->requires_grad) x->accumulate(this->grad.array());
    if (bias->requires_grad) {
      bias->ensure_grad();
      Eigen::Map<Eigen::RowVectorX<S>>(bias->grad.data(), bias->grad.size()) += this->grad.matrix().colwise().sum();
    }
  }
};

template <typename S>
NodePtr<S> add_row(NodePtr<S> x, NodePtr<S> bias) {
  return std::make_shared<AddRowNode<S>>(std::move(x), std::move(bias));
}

// Numerically stabilized row-wise softmax.
template <typename S>
class SoftmaxNode : public Node<S> {
 public:
  explicit SoftmaxNode(NodePtr<S> x) : Node<S>(Tensor<S>(x->value.shape()), {x}) {
    EFE_CHECK(x->value.ndim() == 2, "softmax_rows: 2-D input required");
    auto in = this->parents[0]->value.matrix();
    auto out = this->value.matrix();
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      Eigen::RowVectorX<S> row = in.row(r);
      row.array() -= row.maxCoeff();
      row = row.array().exp();
      out.row(r) = row / row.sum();
    }
  }
  void push_grad() override {
    auto& x = this->parents[0];
    if (!x->requires_grad) return;
    x->ensure_grad();
    auto y = this->value.matrix();
    auto g = this->grad.matrix();
    auto gx = x->grad.matrix();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      S dot = y.row(r).dot(g.row(r));
      gx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  }
};

template <typename S>
NodePtr<S> softmax_rows(NodePtr<S> x) {
  return std::make_shared<SoftmaxNode<S>>(std::move(x));
}

// (B,F) -> (B,1) sum over columns.
template <typename S>
class RowSumNode : public Node<S> {
 public:
  explicit RowSumNode(NodePtr<S> x) : Node<S>(Tensor<S>({x->value.dim(0), 1}), {x}) {
    EFE_CHECK(x->value.ndim() == 2, "row_sum: 2-D input required");
    this->value.matrix().col(0) = this->parents[0]->value.matrix().rowwise().sum();
  }
  void push_grad() override {
    auto& x = this->parents[0];
    if (!x->requires_grad) return;
    x->ensure_grad();
    x->grad.matrix().colwise() += this->grad.matrix().col(0);
  }
};

template <typename S>
NodePtr<S> row_sum(NodePtr<S> x) {
  return std::make_shared<RowSumNode<S>>(std::move(x));
}

// Mean over all elements -> scalar.
template <typename S>
class MeanAllNode : public Node<S> {
 public:
  explicit MeanAllNode(const NodePtr<S>& x) : Node<S>(Tensor<S>::scalar(x->value.array().mean()), {x}) {}
  void push_grad() override {
    auto& x = this->parents[0];
    if (!x->requires_grad) return;
    x->accumulate(this->grad[0] / S(x->value.size()));
  }
};

template <typename S>
NodePtr<S> mean_all(NodePtr<S> x) {
  return std::make_shared<MeanAllNode<S>>(std::move(x));
}

template <typename S>
class SumAllNode : public Node<S> {
 public:
  explicit SumAllNode(const NodePtr<S>& x) : Node<S>(Tensor<S>::scalar(x->value.array().sum()), {x}) {}
  void push_grad() override {
    auto& x = this->parents[0];
    if (!x->requires_grad) return;
    x->accumulate(this->grad[0]);
  }
};

template <typename S>
NodePtr<S> sum_all(NodePtr<S> x) {
  return std::make_shared<SumAllNode<S>>(std::move(x));
}

// Picks value[r, idx[r]] per row -> (B,1).
template <typename S>
class GatherColsNode : public Node<S> {
 public:
  GatherColsNode(NodePtr<S> x, std::vector<int> idx) : Node<S>(Tensor<S>({x->value.dim(0), 1}), {x}), idx_(std::move(idx)) {
    EFE_CHECK(x->value.ndim() == 2 && static_cast<Eigen::Index>(idx_.size()) == x->value.dim(0),
              "gather_cols: one index per row required");
    auto in = this->parents[0]->value.matrix();
    for (Eigen::Index r = 0; r < in.rows(); ++r) this->value[r] = in(r, idx_[r]);
  }
  void push_grad() override {
    auto& x = this->parents[0];
    if (!x->requires_grad) return;
    x->ensure_grad();
    auto gx = x->grad.matrix();
    for (Eigen::Index r = 0; r < gx.rows(); ++r) gx(r, idx_[r]) += this->grad[r];
  }

 private:
  std::vector<int> idx_;
};

template <typename S>
NodePtr<S> gather_cols(NodePtr<S> x, std::vector<int> idx) {
  return std::make_shared<GatherColsNode<S>>(std::move(x), std::move(idx));
}

// Column-wise concatenation of 2-D tensors with equal row counts.
template <typename S>
class ConcatColsNode : public Node<S> {
 public:
  explicit ConcatColsNode(std::vector<NodePtr<S>> xs) : Node<S>() {
    EFE_CHECK(!xs.empty(), "concat_cols: empty input");
    Eigen::Index rows = xs[0]->value.dim(0);
    Eigen::Index cols = 0;
    for (auto& x : xs) {
      EFE_CHECK(x->value.ndim() == 2 && x->value.dim(0) == rows, "concat_cols: row mismatch");
      cols += x->value.dim(1);
    }
    this->parents = xs;
    if (grad_enabled())
      for (auto& x : xs) this->requires_grad = this->requires_grad || x->requires_grad;
    this->value = Tensor<S>({rows, cols});
    auto out = this->value.matrix();
    Eigen::Index at = 0;
    for (auto& x : xs) {
      out.middleCols(at, x->value.dim(1)) = x->value.matrix();
      at += x->value.dim(1);
    }
  }
  void push_grad() override {
    Eigen::Index at = 0;
    auto g = this->grad.matrix();
    for (auto& x : this->parents) {
      if (x->requires_grad) {
        x->ensure_grad();
        x->grad.matrix() += g.middleCols(at, x->value.dim(1));
      }
      at += x->value.dim(1);
    }
  }
};

template <typename S>
NodePtr<S> concat_cols(std::vector<NodePtr<S>> xs) {
  return std::make_shared<ConcatColsNode<S>>(std::move(xs));
}

// Shape change only; data order is preserved.
template <typename S>
class ReshapeNode : public Node<S> {
 public:
  ReshapeNode(NodePtr<S> x, Shape shape) : Node<S>(x->value.reshaped(std::move(shape)), {x}) {}
  void push_grad() override {
    auto& x = this->parents[0];
    if (x->requires_grad) x->accumulate(this->grad.array());
  }
};

template <typename S>
NodePtr<S> reshape(NodePtr<S> x, Shape shape) {
  return std::make_shared<ReshapeNode<S>>(std::move(x), std::move(shape));
}

// (B, C, H, W, T) -> (B, C*H*W*T)
template <typename S>
NodePtr<S> flatten_rows(NodePtr<S> x) {
  Eigen::Index b = x->value.dim(0);
  Eigen::Index rest = x->value.size() / b;
  return reshape(std::move(x), Shape{b, rest});
}

// Bernoulli cross-entropy, summed per sample and averaged over the batch.
// y and target share any shape whose leading dim is the batch.
template <typename S>
class BceNode : public Node<S> {
 public:
  BceNode(NodePtr<S> y, Tensor<S> target, S eps) : Node<S>(), target_(std::move(target)), eps_(eps) {
    EFE_CHECK(y->value.same_shape(target_), "bce: shape mismatch");
    this->parents = {y};
    if (grad_enabled()) this->requires_grad = y->requires_grad;
    batch_ = y->value.dim(0);
    const auto& p = y->value.array();
    const auto& t = target_.array();
    S total = -(t * p.max(eps_).log() + (S(1) - t) * (S(1) - p).max(eps_).log()).sum();
    this->value = Tensor<S>::scalar(total / S(batch_));
  }
  void push_grad() override {
    auto& y = this->parents[0];
    if (!y->requires_grad) return;
    const auto& p = y->value.array();
    const auto& t = target_.array();
    S g = this->grad[0] / S(batch_);
    y->accumulate(g * (-(t * (p > eps_).template cast<S>() / p.max(eps_)) +
                       (S(1) - t) * ((S(1) - p) > eps_).template cast<S>() / (S(1) - p).max(eps_)));
  }

 private:
  Tensor<S> target_;
  S eps_;
  Eigen::Index batch_ = 1;
};

template <typename S>
NodePtr<S> bce_sum_mean(NodePtr<S> y, Tensor<S> target, S eps) {
  return std::make_shared<BceNode<S>>(std::move(y), std::move(target), eps);
}

// mean((a-b)^2) over all elements.
template <typename S>
NodePtr<S> mse(NodePtr<S> a, NodePtr<S> b) {
  return mean_all(square(sub(std::move(a), std::move(b))));
}

}  // namespace efe::ad
