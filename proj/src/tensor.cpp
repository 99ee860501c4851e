#include "partwise/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace partwise {

namespace {
thread_local bool t_grad_mode = true;
}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  if (shape.size() == 1) out << ',';
  out << ')';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

bool grad_mode_enabled() { return t_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(t_grad_mode) { t_grad_mode = false; }
NoGradGuard::~NoGradGuard() { t_grad_mode = previous_; }

template <class T>
BasicTensor<T>::BasicTensor() : node_(std::make_shared<Node>()) {
  node_->shape = {0};
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " cannot hold " +
                         std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T{0});
}

template <class T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  const auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value));
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{}, std::vector<T>{value});
}

template <class T>
BasicTensor<T> BasicTensor<T>::eye(std::size_t n) {
  std::vector<T> data(n * n, T{0});
  for (std::size_t i = 0; i < n; ++i) data[i * n + i] = T{1};
  return BasicTensor({n, n}, std::move(data));
}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
  }
  return node_->shape[axis];
}

template <class T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

template <class T>
T BasicTensor<T>::at(std::size_t row, std::size_t col) const {
  return node_->data[row * node_->shape[1] + col];
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

template <class T>
std::span<T> BasicTensor<T>::mutable_grad() {
  return detail::grad_buffer(*node_);
}

template <class T>
void BasicTensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <class T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; the reversed order visits every node after all
  // of its consumers.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto root_grad = detail::grad_buffer(*node_);
  root_grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (Node* node : order) {
    if (node->is_leaf) continue;
    node->backward = nullptr;
    node->parents.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(node_->shape, node_->data);
}

namespace {
template <class T>
struct PinState {
  typename PinnedConstants<T>::Mode mode = PinnedConstants<T>::Mode::kOff;
  PinnedConstants<T>* store = nullptr;
};

template <class T>
PinState<T>& pin_state() {
  thread_local PinState<T> state;
  return state;
}
}  // namespace

template <class T>
PinnedConstants<T>::Scope::Scope(PinnedConstants& store, Mode mode)
    : previous_mode_(pin_state<T>().mode), previous_store_(pin_state<T>().store) {
  auto& state = pin_state<T>();
  state.mode = mode;
  state.store = &store;
  if (mode == Mode::kRecord) store.values_.clear();
  store.cursor_ = 0;
}

template <class T>
PinnedConstants<T>::Scope::~Scope() {
  auto& state = pin_state<T>();
  state.mode = previous_mode_;
  state.store = previous_store_;
}

template <class T>
std::vector<T> PinnedConstants<T>::pin(std::vector<T> computed) {
  auto& state = pin_state<T>();
  switch (state.mode) {
    case Mode::kOff:
      return computed;
    case Mode::kRecord:
      state.store->values_.push_back(computed);
      return computed;
    case Mode::kReplay: {
      auto& store = *state.store;
      if (store.cursor_ >= store.values_.size()) {
        throw ContractError("pinned-constant replay requested more values than were recorded");
      }
      const auto& pinned = store.values_[store.cursor_++];
      if (pinned.size() != computed.size()) throw ContractError("pinned-constant replay size mismatch");
      return pinned;
    }
  }
  return computed;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class PinnedConstants<float>;
template class PinnedConstants<double>;

}  // namespace partwise
