#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "partwise/error.hpp"

namespace partwise {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;  // pushes this->grad into parents
};

/// Dense row-major tensor with reverse-mode autodiff.
///
/// A BasicTensor is a shared handle: copies alias the same storage. Operations
/// always produce fresh tensors, so values are immutable once written except
/// through mutable_data(), which is meant for parameter updates and
/// initialization. The computation graph is recorded only while gradient mode
/// is enabled on the current thread and at least one operand requires grad; it
/// is released by backward().
///
/// T is float for training and inference; the double instantiation exists so
/// gradient checks can run the identical code path in higher precision.
template <class T>
class BasicTensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  BasicTensor();
  BasicTensor(Shape shape, std::vector<T> data);
  explicit BasicTensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape);
  static BasicTensor full(Shape shape, T value);
  static BasicTensor scalar(T value);
  static BasicTensor eye(std::size_t n);

  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const;
  [[nodiscard]] std::size_t numel() const { return node_->data.size(); }

  [[nodiscard]] std::span<const T> data() const { return node_->data; }
  [[nodiscard]] std::span<T> mutable_data() { return node_->data; }
  [[nodiscard]] std::vector<T> to_vector() const { return node_->data; }

  /// Value of a one-element tensor.
  [[nodiscard]] T item() const;
  [[nodiscard]] T at(std::size_t i) const { return node_->data[i]; }
  [[nodiscard]] T at(std::size_t row, std::size_t col) const;

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  /// Marks a leaf as a trainable parameter.
  BasicTensor& set_requires_grad(bool on);

  [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
  [[nodiscard]] std::span<const T> grad() const { return node_->grad; }
  [[nodiscard]] std::span<T> mutable_grad();
  void zero_grad();

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires grad,
  /// then frees the graph. Throws ContractError unless this is a scalar.
  void backward() const;

  /// Copy of the values with no graph linkage.
  [[nodiscard]] BasicTensor detach() const;

  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }
  [[nodiscard]] bool aliases(const BasicTensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;

/// Gradient recording is on by default; disabled per thread inside a guard.
bool grad_mode_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Gradient buffer of `node`, allocated (zeroed) on first use.
template <class T>
std::span<T> grad_buffer(TensorNode<T>& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), T{0});
  return node.grad;
}

/// Builds an op result. The graph edge is recorded only when gradient mode is
/// on and some input requires grad; `backward` then runs with the result node
/// once its gradient is complete. Results without an edge are leaves.
template <class T>
BasicTensor<T> record(Shape shape, std::vector<T> data, std::initializer_list<const BasicTensor<T>*> inputs,
                      std::function<void(TensorNode<T>&)> backward) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_mode_enabled()) {
    for (const auto* input : inputs) {
      if (input->requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
    if (node->requires_grad) {
      for (const auto* input : inputs) {
        if (input->requires_grad()) node->parents.push_back(input->node());
      }
      node->backward = std::move(backward);
      node->is_leaf = false;
    }
  }
  return BasicTensor<T>(std::move(node));
}

}  // namespace detail

/// Replays values that an operation computes under stop-gradient.
///
/// Autodiff treats such values as constants, so a finite-difference probe of
/// the same function must hold them fixed as well. Inside a Record scope every
/// pinned value is captured in call order; inside a Replay scope the captured
/// values are returned instead of the freshly computed ones. Outside both
/// scopes pin() is the identity. Thread-local.
template <class T>
class PinnedConstants {
 public:
  enum class Mode { kOff, kRecord, kReplay };

  class Scope {
   public:
    Scope(PinnedConstants& store, Mode mode);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Mode previous_mode_;
    PinnedConstants* previous_store_;
  };

  static std::vector<T> pin(std::vector<T> computed);

  [[nodiscard]] std::size_t size() const { return values_.size(); }

 private:
  std::vector<std::vector<T>> values_;
  std::size_t cursor_ = 0;
};

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class PinnedConstants<float>;
extern template class PinnedConstants<double>;

}  // namespace partwise
