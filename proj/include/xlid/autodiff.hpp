#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors. A Value is a shared handle to a graph node; ops build new nodes
// that remember their parents and a backward rule. backward() walks the graph
// in reverse topological order and accumulates into every node's grad.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace xlid::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), values_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  Real* data() { return values_.data(); }
  const Real* data() const { return values_.data(); }
  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  std::vector<Real>& storage() { return values_; }

  Real& operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }

  void fill(Real v) { std::fill(values_.begin(), values_.end(), v); }
  /// Same values, new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<Real> values_;
};

template <typename Real>
struct Node {
  Tensor<Real> data;
  Tensor<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

template <typename Real>
class Value {
 public:
  Value() = default;

  /// Graph leaf. Leaves with requires_grad get a zero grad buffer.
  static Value leaf(Tensor<Real> data, bool requires_grad = true);
  static Value constant(Tensor<Real> data) { return leaf(std::move(data), false); }

  const Tensor<Real>& data() const { return node_->data; }
  Tensor<Real>& mutable_data() { return node_->data; }
  const Tensor<Real>& grad() const { return node_->grad; }
  Tensor<Real>& mutable_grad() { return node_->grad; }
  const Shape& shape() const { return node_->data.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.fill(Real(0)); }
  explicit operator bool() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node<Real>>& node() const { return node_; }
  explicit Value(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<Real>> node_;
};

/// While alive on a thread, ops on that thread record no backward rules and
/// produce values that do not require grad.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

template <typename Real>
Value<Real> add(const Value<Real>& a, const Value<Real>& b);

/// x[..., Din] * w[Din, Dout] + b[Dout].
template <typename Real>
Value<Real> linear(const Value<Real>& x, const Value<Real>& w, const Value<Real>& b);

/// Valid (unpadded) dilated temporal convolution. x is [T, Din] or
/// [N, T, Din]; taps are sorted unique frame offsets scaled by dilation; w is
/// [taps * Din, Dout]. Output length T - (max - min) effective offset.
template <typename Real>
Value<Real> tdnn_layer(const Value<Real>& x, std::span<const int> taps, int dilation,
                       const Value<Real>& w, const Value<Real>& b);

template <typename Real>
Value<Real> relu(const Value<Real>& x);

/// [T, D] -> [2D] or [N, T, D] -> [N, 2D]: mean then population standard
/// deviation sqrt(var + eps) over time.
template <typename Real>
Value<Real> stats_pool(const Value<Real>& x);

inline constexpr double kStatsPoolEps = 1e-10;

/// Mean over rows of -log softmax(logits)[label]; logits [N, L] or [L].
template <typename Real>
Value<Real> softmax_cross_entropy(const Value<Real>& logits, std::span<const int> labels);

/// Scalar sum(x * weights); a convenient probe for gradient checks.
template <typename Real>
Value<Real> weighted_sum(const Value<Real>& x, const Tensor<Real>& weights);

/// Row-wise softmax with max shift (no graph).
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits);

/// Fills grads with d(root)/d(node) for every node reachable from root.
template <typename Real>
void backward(const Value<Real>& root);

enum class OptimizerKind { sgd, adam };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings);

  /// Applies one update to every parameter and zeroes the grads.
  void step(std::span<Value<Real>> params);

  const OptimizerSettings& settings() const { return settings_; }
  std::size_t steps() const { return steps_; }

 private:
  OptimizerSettings settings_;
  std::vector<std::vector<Real>> first_;
  std::vector<std::vector<Real>> second_;
  std::size_t steps_ = 0;
};

}  // namespace xlid::ad
