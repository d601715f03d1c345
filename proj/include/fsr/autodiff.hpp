#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fsr/tensor.hpp"

namespace fsr {

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  const Tensor<T>& grad() const { return tape_->grad(id_); }
  std::size_t id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records ops in creation order; backward replays them in reverse.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), {}, false, nullptr); }
  Var<T> variable(Tensor<T> value) { return push("variable", std::move(value), {}, true, nullptr); }

  /// Appends an op result. The backward rule only runs when some input requires grad.
  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs, Backward backward) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) {
      ids.push_back(in.id());
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(op, std::move(value), std::move(ids), needs, needs ? std::move(backward) : Backward{});
  }

  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_string(loss.shape()));
    }
    zero_grad();
    Node& root = nodes_[loss.id()];
    root.grad = Tensor<T>(root.value.shape(), T(1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) n.grad = Tensor<T>();
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }

  /// Gradient of a node after backward; zeros when nothing flowed into it.
  const Tensor<T>& grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.empty()) {
      n.grad = Tensor<T>(n.value.shape());
    }
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Mutable gradient slot for backward rules, allocated on first touch.
  Tensor<T>& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  void accumulate(std::size_t id, const Tensor<T>& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor<T>& slot = grad_slot(id);
    T* dst = slot.ptr();
    const T* src = g.ptr();
    for (std::size_t i = 0, n = slot.size(); i < n; ++i) dst[i] += src[i];
  }

  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Debug mode: every recorded value is scanned and a NonFiniteError names the producing op.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    mutable Tensor<T> grad;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(std::string_view op, Tensor<T> value, std::vector<std::size_t> inputs, bool requires_grad,
              Backward backward) {
    if (check_finite_ && !value.all_finite()) {
      throw NonFiniteError("non-finite value produced by op '" + std::string(op) + "' at node " +
                           std::to_string(nodes_.size()));
    }
    nodes_.push_back(Node{op, std::move(value), Tensor<T>(), std::move(inputs), requires_grad, std::move(backward)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  bool check_finite_ = false;
};

enum class Activation { relu, gelu, leaky_relu, elu, selu };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

// Elementwise, same shapes.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> abs(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> activate(const Var<T>& a, Activation kind);

/// (m x n) + bias (n) broadcast over rows.
template <typename T> Var<T> add_bias(const Var<T>& a, const Var<T>& bias);

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t length);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

/// NCHW convolution, odd kernel extents, zero "same" padding. `bias` may be an invalid Var.
template <typename T> Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = Var<T>());

/// Row-wise standardization of a matrix (zero mean, unit variance per row).
template <typename T> Var<T> layer_stat_normalize(const Var<T>& a, T eps = T(1e-5));

/// Column-wise standardization of a matrix (zero mean, unit variance per column).
template <typename T> Var<T> column_standardize(const Var<T>& a, T eps = T(1e-5));

/// out[q, j*d + c] = weights[q*k + j] * src[indices[q*k + j], c] for j < k. Weights are constants.
template <typename T>
Var<T> gather_weighted(const Var<T>& src, const std::vector<std::uint32_t>& indices, const std::vector<T>& weights,
                       std::size_t k);

// Fixed linear field ops over the last two extents; backward is the exact adjoint.
template <typename T> Var<T> spectral_resize(const Var<T>& a, std::size_t ny, std::size_t nx);
template <typename T> Var<T> zero_interleave(const Var<T>& a, std::size_t factor);
template <typename T> Var<T> descend(const Var<T>& a);
template <typename T> Var<T> ascend(const Var<T>& a, std::size_t ny, std::size_t nx);

// Plain tensor helpers shared by ops and reference code.
template <typename T> Tensor<T> activation_forward(const Tensor<T>& x, Activation kind);
template <typename T> T activation_derivative(T x, Activation kind);

}  // namespace fsr
