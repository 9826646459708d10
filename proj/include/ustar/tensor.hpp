#pragma once

// Dense tensors with tape-free reverse-mode differentiation.
//
// Each op result holds shared references to its inputs and a closure that
// pushes its gradient back into them; backward() walks that DAG in reverse
// topological order. Tensors are treated as matrices: rows() is the product of
// all leading dimensions and cols() the last one.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ustar::ad {

template <typename T>
struct Node {
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor constant(std::vector<std::size_t> shape, std::vector<T> values);
  static Tensor zeros(std::vector<std::size_t> shape);
  /// Leaf that accumulates gradient (parameters, gradient-check inputs).
  static Tensor variable(std::vector<std::size_t> shape, std::vector<T> values);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> value() const { return node_->value; }
  std::span<T> mutable_value() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  T item() const;
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  void zero_grad();
  /// Seeds d(this)/d(this) = 1 and accumulates into every reachable leaf.
  /// Intermediate gradients are reset first, so repeated calls on the same
  /// graph add the same contribution to the leaves again.
  void backward() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// --- ops -------------------------------------------------------------------

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// y = x W + b with W [in, out], b [out].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
/// Softmax along the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);
template <typename T> Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> rows);
/// Row-wise layer normalization with affine gamma/beta of width cols().
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

/// Scaled dot-product attention core on pre-projected q/k/v, all of width W.
/// Query rows in segment s attend only to key rows of segment s.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, std::vector<std::size_t> q_offsets,
                    std::vector<std::size_t> k_offsets);

/// Independent per-group affine maps. w is [groups, in, out], b is [groups, out].
/// With shared_input, x is [n, in] and every group reads it; otherwise x is
/// [n, groups*in] and group g reads columns [g*in, (g+1)*in). Output is
/// [n, groups*out].
template <typename T>
Tensor<T> grouped_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         bool shared_input);

/// Mean elementwise Smooth L1 with transition point beta.
template <typename T>
Tensor<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target, T beta = T(1));

/// Loss over [n, views*6] action blocks (dpos mm, drot deg). Rotation
/// differences are wrapped to [-180, 180) before the Smooth L1 transform.
/// Mean over present (sample, view) pairs of the mean over the 6 components.
/// mask is [n, views] with entries 0 or 1.
template <typename T>
Tensor<T> action_smooth_l1(const Tensor<T>& pred, const Tensor<T>& target,
                           std::span<const T> mask, T beta = T(1));

}  // namespace ustar::ad
