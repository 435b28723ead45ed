#include "xlid/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "xlid/errors.hpp"
#include "xlid/kernels.hpp"

namespace xlid::ad {
namespace {

thread_local bool g_no_grad = false;

using kernels::Index;

template <typename Real>
void check_finite(const Tensor<Real>& t, const char* op) {
  for (Real v : t.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, std::string(op) + " produced NaN/Inf");
  }
}

// Creates the output node of an op; the backward rule is attached only when
// some parent needs a gradient and grad recording is on.
template <typename Real>
Value<Real> make_result(Tensor<Real> data, const char* op,
                        std::vector<std::shared_ptr<Node<Real>>> parents,
                        std::function<void(Node<Real>&)> rule) {
  check_finite(data, op);
  auto node = std::make_shared<Node<Real>>();
  node->data = std::move(data);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs && !g_no_grad) {
    node->requires_grad = true;
    node->grad = Tensor<Real>(node->data.shape());
    node->parents = std::move(parents);
    node->backward = std::move(rule);
  }
  return Value<Real>(std::move(node));
}

// Interprets a [T, D] or [N, T, D] tensor as (N, T, D).
std::array<std::size_t, 3> as_sequence(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + " expects [T, D] or [N, T, D], got " + to_string(s));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != numel(shape_)) {
    throw Error(ErrorCode::ShapeMismatch, "tensor of shape " + to_string(shape_) + " given " +
                                              std::to_string(values_.size()) + " values");
  }
}

template <typename Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), values_);
}

template <typename Real>
Value<Real> Value<Real>::leaf(Tensor<Real> data, bool requires_grad) {
  auto node = std::make_shared<Node<Real>>();
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad = Tensor<Real>(node->data.shape());
  return Value(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

template <typename Real>
Value<Real> add(const Value<Real>& a, const Value<Real>& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "add " + to_string(a.shape()) + " + " + to_string(b.shape()));
  }
  Tensor<Real> out = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  return make_result<Real>(std::move(out), "add", {a.node(), b.node()}, [](Node<Real>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <typename Real>
Value<Real> linear(const Value<Real>& x, const Value<Real>& w, const Value<Real>& b) {
  const Shape& xs = x.shape();
  if (w.shape().size() != 2 || b.shape().size() != 1 || xs.empty() ||
      xs.back() != w.shape()[0] || b.shape()[0] != w.shape()[1]) {
    throw Error(ErrorCode::ShapeMismatch, "linear x" + to_string(xs) + " W" + to_string(w.shape()) +
                                              " b" + to_string(b.shape()));
  }
  const auto din = static_cast<Index>(w.shape()[0]);
  const auto dout = static_cast<Index>(w.shape()[1]);
  const auto rows = static_cast<Index>(x.data().size()) / din;
  Shape out_shape = xs;
  out_shape.back() = static_cast<std::size_t>(dout);
  Tensor<Real> out(out_shape);
  kernels::gemm(false, false, rows, dout, din, x.data().data(), w.data().data(), out.data(), false);
  kernels::add_bias(out.data(), b.data().data(), rows, dout);
  return make_result<Real>(std::move(out), "linear", {x.node(), w.node(), b.node()},
                           [rows, din, dout](Node<Real>& self) {
                             auto& px = *self.parents[0];
                             auto& pw = *self.parents[1];
                             auto& pb = *self.parents[2];
                             if (px.requires_grad) {
                               kernels::gemm(false, true, rows, din, dout, self.grad.data(),
                                             pw.data.data(), px.grad.data(), true);
                             }
                             if (pw.requires_grad) {
                               kernels::gemm(true, false, din, dout, rows, px.data.data(),
                                             self.grad.data(), pw.grad.data(), true);
                             }
                             if (pb.requires_grad) {
                               kernels::bias_backward(self.grad.data(), rows, dout, pb.grad.data());
                             }
                           });
}

template <typename Real>
Value<Real> tdnn_layer(const Value<Real>& x, std::span<const int> taps, int dilation,
                       const Value<Real>& w, const Value<Real>& b) {
  if (taps.empty() || dilation < 1) {
    throw Error(ErrorCode::ShapeMismatch, "tdnn needs at least one tap and dilation >= 1");
  }
  for (std::size_t i = 1; i < taps.size(); ++i) {
    if (taps[i] <= taps[i - 1]) throw Error(ErrorCode::ShapeMismatch, "tdnn taps must be sorted and unique");
  }
  const auto [batch, t_in, din] = as_sequence(x.shape(), "tdnn_layer");
  const std::size_t k = taps.size();
  if (w.shape().size() != 2 || w.shape()[0] != k * din || b.shape().size() != 1 ||
      b.shape()[0] != w.shape()[1]) {
    throw Error(ErrorCode::ShapeMismatch, "tdnn x" + to_string(x.shape()) + " with " +
                                              std::to_string(k) + " taps vs W" + to_string(w.shape()) +
                                              " b" + to_string(b.shape()));
  }
  auto offsets = std::make_shared<std::vector<int>>();
  for (int t : taps) offsets->push_back(t * dilation);
  const auto span = static_cast<std::size_t>(offsets->back() - offsets->front());
  if (t_in <= span) {
    throw Error(ErrorCode::SequenceTooShort, "tdnn needs more than " + std::to_string(span) +
                                                 " frames, got " + std::to_string(t_in));
  }
  const std::size_t t_out = t_in - span;
  const auto dout = static_cast<Index>(w.shape()[1]);
  const auto rows = static_cast<Index>(batch * t_out);
  const auto width = static_cast<Index>(k * din);

  auto spliced = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows * width));
  kernels::splice(x.data().data(), static_cast<Index>(batch), static_cast<Index>(t_in),
                  static_cast<Index>(din), std::span<const int>(*offsets), spliced->data());

  Shape out_shape = x.shape().size() == 2 ? Shape{t_out, static_cast<std::size_t>(dout)}
                                          : Shape{batch, t_out, static_cast<std::size_t>(dout)};
  Tensor<Real> out(out_shape);
  kernels::gemm(false, false, rows, dout, width, spliced->data(), w.data().data(), out.data(), false);
  kernels::add_bias(out.data(), b.data().data(), rows, dout);

  return make_result<Real>(
      std::move(out), "tdnn_layer", {x.node(), w.node(), b.node()},
      [=, batch = batch, t_in = t_in, din = din](Node<Real>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pw.requires_grad) {
          kernels::gemm(true, false, width, dout, rows, spliced->data(), self.grad.data(),
                        pw.grad.data(), true);
        }
        if (pb.requires_grad) kernels::bias_backward(self.grad.data(), rows, dout, pb.grad.data());
        if (px.requires_grad) {
          std::vector<Real> grad_spliced(static_cast<std::size_t>(rows * width));
          kernels::gemm(false, true, rows, width, dout, self.grad.data(), pw.data.data(),
                        grad_spliced.data(), false);
          kernels::splice_backward(grad_spliced.data(), static_cast<Index>(batch),
                                   static_cast<Index>(t_in), static_cast<Index>(din),
                                   std::span<const int>(*offsets), px.grad.data());
        }
      });
}

template <typename Real>
Value<Real> relu(const Value<Real>& x) {
  Tensor<Real> out(x.shape());
  const auto n = static_cast<Index>(out.size());
  kernels::relu(x.data().data(), out.data(), n);
  return make_result<Real>(std::move(out), "relu", {x.node()}, [n](Node<Real>& self) {
    auto& px = *self.parents[0];
    kernels::relu_backward(px.data.data(), self.grad.data(), px.grad.data(), n);
  });
}

template <typename Real>
Value<Real> stats_pool(const Value<Real>& x) {
  const auto [batch, t, dim] = as_sequence(x.shape(), "stats_pool");
  if (t < 2) {
    throw Error(ErrorCode::SequenceTooShort, "stats_pool needs at least 2 frames, got " + std::to_string(t));
  }
  Shape out_shape = x.shape().size() == 2 ? Shape{2 * dim} : Shape{batch, 2 * dim};
  Tensor<Real> out(out_shape);
  kernels::stats_pool(x.data().data(), static_cast<Index>(batch), static_cast<Index>(t),
                      static_cast<Index>(dim), static_cast<Real>(kStatsPoolEps), out.data());
  return make_result<Real>(std::move(out), "stats_pool", {x.node()},
                           [batch = batch, t = t, dim = dim](Node<Real>& self) {
                             auto& px = *self.parents[0];
                             kernels::stats_pool_backward(px.data.data(), self.data.data(),
                                                          self.grad.data(), static_cast<Index>(batch),
                                                          static_cast<Index>(t), static_cast<Index>(dim),
                                                          px.grad.data());
                           });
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits) {
  if (logits.rank() == 0 || logits.rank() > 2) {
    throw Error(ErrorCode::ShapeMismatch, "softmax expects [L] or [N, L]");
  }
  const std::size_t l = logits.shape().back();
  const std::size_t n = logits.size() / l;
  Tensor<Real> out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const Real* z = logits.data() + r * l;
    Real* p = out.data() + r * l;
    const Real mx = *std::max_element(z, z + l);
    Real sum = 0;
    for (std::size_t j = 0; j < l; ++j) {
      p[j] = std::exp(z[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < l; ++j) p[j] /= sum;
  }
  return out;
}

template <typename Real>
Value<Real> softmax_cross_entropy(const Value<Real>& logits, std::span<const int> labels) {
  const Tensor<Real>& z = logits.data();
  if (z.rank() == 0 || z.rank() > 2) {
    throw Error(ErrorCode::ShapeMismatch, "cross entropy expects [L] or [N, L]");
  }
  const std::size_t l = z.shape().back();
  const std::size_t n = z.size() / l;
  if (labels.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(labels.size()) + " labels for " +
                                              std::to_string(n) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= l) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y) + " with " +
                                                  std::to_string(l) + " classes");
    }
  }
  // log-sum-exp with max shift; double accumulation for the scalar.
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const Real* row = z.data() + r * l;
    const double mx = *std::max_element(row, row + l);
    double sum = 0.0;
    for (std::size_t j = 0; j < l; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    total += mx + std::log(sum) - static_cast<double>(row[labels[r]]);
  }
  Tensor<Real> out(Shape{});
  out[0] = static_cast<Real>(total / static_cast<double>(n));
  std::vector<int> kept(labels.begin(), labels.end());
  return make_result<Real>(std::move(out), "softmax_cross_entropy", {logits.node()},
                           [kept = std::move(kept), n, l](Node<Real>& self) {
                             auto& pz = *self.parents[0];
                             const Tensor<Real> p = softmax(pz.data);
                             const Real scale = self.grad[0] / static_cast<Real>(n);
                             for (std::size_t r = 0; r < n; ++r) {
                               for (std::size_t j = 0; j < l; ++j) {
                                 Real g = p[r * l + j] - (static_cast<int>(j) == kept[r] ? Real(1) : Real(0));
                                 pz.grad[r * l + j] += scale * g;
                               }
                             }
                           });
}

template <typename Real>
Value<Real> weighted_sum(const Value<Real>& x, const Tensor<Real>& weights) {
  if (weights.size() != x.data().size()) {
    throw Error(ErrorCode::ShapeMismatch, "weighted_sum weights do not match " + to_string(x.shape()));
  }
  Real s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.data()[i] * weights[i];
  Tensor<Real> out(Shape{});
  out[0] = s;
  return make_result<Real>(std::move(out), "weighted_sum", {x.node()}, [weights](Node<Real>& self) {
    auto& px = *self.parents[0];
    for (std::size_t i = 0; i < weights.size(); ++i) px.grad[i] += self.grad[0] * weights[i];
  });
}

template <typename Real>
void backward(const Value<Real>& root) {
  if (root.data().size() != 1) {
    throw Error(ErrorCode::NonScalarRoot, "backward from shape " + to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> visited;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Real>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

template <typename Real>
Optimizer<Real>::Optimizer(OptimizerSettings settings) : settings_(settings) {
  if (!(settings_.learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  }
}

template <typename Real>
void Optimizer<Real>::step(std::span<Value<Real>> params) {
  ++steps_;
  const bool adam = settings_.kind == OptimizerKind::adam;
  if (adam && first_.empty()) {
    for (auto& p : params) {
      first_.emplace_back(p.data().size(), Real(0));
      second_.emplace_back(p.data().size(), Real(0));
    }
  }
  if (adam && first_.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer was built for a different parameter list");
  }
  const double lr = settings_.learning_rate;
  const double bc1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Real>& w = params[i].mutable_data();
    Tensor<Real>& g = params[i].mutable_grad();
    const auto n = static_cast<Index>(w.size());
    if (adam) {
      if (first_[i].size() != w.size()) {
        throw Error(ErrorCode::ShapeMismatch, "moment buffer does not match parameter " + std::to_string(i));
      }
      Real* m = first_[i].data();
      Real* v = second_[i].data();
      const auto b1 = static_cast<Real>(settings_.beta1);
      const auto b2 = static_cast<Real>(settings_.beta2);
      const auto step = static_cast<Real>(lr / bc1);
      const auto inv_bc2 = static_cast<Real>(1.0 / bc2);
      const auto eps = static_cast<Real>(settings_.eps);
#pragma omp parallel for schedule(static)
      for (Index j = 0; j < n; ++j) {
        m[j] = b1 * m[j] + (Real(1) - b1) * g[j];
        v[j] = b2 * v[j] + (Real(1) - b2) * g[j] * g[j];
        w[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
      }
    } else {
      const auto rate = static_cast<Real>(lr);
      for (Index j = 0; j < n; ++j) w[j] -= rate * g[j];
    }
    g.fill(Real(0));
  }
}

#define XLID_INSTANTIATE_AD(R)                                                                  \
  template class Tensor<R>;                                                                     \
  template class Value<R>;                                                                      \
  template class Optimizer<R>;                                                                  \
  template Value<R> add<R>(const Value<R>&, const Value<R>&);                                   \
  template Value<R> linear<R>(const Value<R>&, const Value<R>&, const Value<R>&);               \
  template Value<R> tdnn_layer<R>(const Value<R>&, std::span<const int>, int, const Value<R>&, \
                                  const Value<R>&);                                             \
  template Value<R> relu<R>(const Value<R>&);                                                   \
  template Value<R> stats_pool<R>(const Value<R>&);                                             \
  template Value<R> softmax_cross_entropy<R>(const Value<R>&, std::span<const int>);            \
  template Value<R> weighted_sum<R>(const Value<R>&, const Tensor<R>&);                         \
  template Tensor<R> softmax<R>(const Tensor<R>&);                                              \
  template void backward<R>(const Value<R>&);

XLID_INSTANTIATE_AD(float)
XLID_INSTANTIATE_AD(double)

}  // namespace xlid::ad
