#pragma once

// Reverse-mode differentiation over vector-valued nodes.
//
// A Tape records operations in execution order; backward() walks them in
// exact reverse order. Nodes either own their value or view caller storage
// (bind()), which lets network parameters enter the graph without copies.
// Viewed storage must outlive the tape. Tapes are single-threaded; build one
// per evaluation.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace thoughtflow {

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tracked leaf owning a copy of `value`.
  Var variable(std::span<const double> value);
  /// Untracked node owning a copy of `value`.
  Var constant(std::span<const double> value);
  /// Node viewing caller storage; tracked when `requires_grad`.
  Var bind(std::span<const double> value, bool requires_grad);

  /// out = W x + b; W is row-major with b.size() rows and x.size() cols.
  Var dense(Var x, Var weights, Var bias);
  Var selu(Var x);
  Var sigmoid(Var x);
  Var softmax(Var x);
  Var concat(Var a, Var b);
  /// Elementwise product with a constant mask (dropout).
  Var mul_mask(Var x, std::span<const double> mask);
  Var pick(Var x, std::size_t index);
  Var square(Var x);
  Var add(Var a, Var b);
  Var scale(Var x, double factor);
  Var sum(Var x);
  /// Scalar log-sum-exp(z) - z[gold].
  Var softmax_cross_entropy(Var logits, std::size_t gold);
  /// Scalar binary cross-entropy of sigmoid(logit) against `target` in {0,1},
  /// weighted by `positive_weight` when target == 1.
  Var sigmoid_binary_cross_entropy(Var logit, double target, double positive_weight = 1.0);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 and propagates to every tracked node recorded
  /// before `out`. Throws ContractError if `out` is not a scalar.
  void backward(Var out);

  /// Gradient accumulated by the last backward(); empty for untracked nodes.
  std::span<const double> grad(Var v) const;

 private:
  struct Node {
    std::vector<double> owned;
    std::span<const double> view;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backward;
  };

  Var push(std::vector<double> value, bool requires_grad,
           std::function<void(Tape&, const Node&)> backward);
  Node& node(Var v) { return nodes_[v.id]; }
  const Node& node(Var v) const { return nodes_[v.id]; }
  std::vector<double>& grad_buffer(Var v);
  void check(Var v) const;

  std::deque<Node> nodes_;
};

}  // namespace thoughtflow
