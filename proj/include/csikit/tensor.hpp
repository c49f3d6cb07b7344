#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "csikit/common.hpp"
#include "csikit/rng.hpp"

namespace csikit::nn {

namespace detail {
inline thread_local bool grad_enabled = true;
inline thread_local bool finite_checks = false;
}  // namespace detail

inline bool grad_mode() { return detail::grad_enabled; }

// NaN/Inf detection hook: when enabled, every op validates its output.
inline void set_finite_checks(bool on) { detail::finite_checks = on; }
inline bool finite_checks_enabled() { return detail::finite_checks; }

// Disables graph construction while alive (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

template <typename S>
struct NodeT {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // sized lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

// Value-semantics handle to a node of the computation graph. Tensors are
// immutable once produced by an op; only leaves may be mutated in place
// (parameter updates, finite-difference probes).
template <typename S>
class TensorT {
 public:
  using Node = NodeT<S>;
  using Scalar = S;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static TensorT zeros(Shape shape) {
    return full(std::move(shape), S(0));
  }

  static TensorT full(Shape shape, S v) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_size(shape), v);
    n->shape = std::move(shape);
    return TensorT(n);
  }

  static TensorT scalar(S v) { return full({1}, v); }

  static TensorT from(std::vector<S> data, Shape shape) {
    require(data.size() == shape_size(shape), "Tensor::from: size mismatch");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return TensorT(n);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }

  const std::vector<S>& value() const { return node_->value; }
  S item() const {
    require(size() == 1, "Tensor::item: not a scalar");
    return node_->value[0];
  }
  S at(std::size_t i) const { return node_->value.at(i); }
  S at(std::size_t i, std::size_t j) const {
    return node_->value.at(i * cols() + j);
  }

  // Leaf-only mutation (parameters, probes). Invalidates nothing: graphs are
  // rebuilt per evaluation.
  std::vector<S>& mutable_value() {
    require(node_ && node_->parents.empty(), "mutable_value: not a leaf");
    return node_->value;
  }

  TensorT& set_requires_grad(bool on = true) {
    require(node_ && node_->parents.empty(), "set_requires_grad: not a leaf");
    node_->requires_grad = on;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<S>& grad() const {
    require(node_ != nullptr, "grad: undefined tensor");
    require(node_->grad.size() == node_->value.size(),
            "grad: backward has not reached this tensor");
    return node_->grad;
  }
  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), S(0));
  }

  // Copy of the value with no graph attachment.
  TensorT detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    return TensorT(n);
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Reverse-mode sweep from a scalar output.
  void backward() {
    require(node_ && node_->size() == 1, "backward: output must be scalar");
    // Post-order over requires_grad nodes, iterative to bound stack depth.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (node_->requires_grad) stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward) n->backward(*n);
    }
  }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<double>;

template <typename S>
void check_finite(const std::vector<S>& v, const char* where) {
  for (S x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      fail(std::string("non-finite value produced by ") + where);
  }
}

// Central op factory. Wires parents and the backward closure only when grad
// mode is on and some parent needs gradients.
template <typename S>
TensorT<S> make_op(const char* name, Shape shape, std::vector<S> value,
                   std::vector<TensorT<S>> parents,
                   std::function<void(NodeT<S>&)> backward_fn) {
  require(value.size() == shape_size(shape), std::string(name) + ": bad shape");
  if (finite_checks_enabled()) check_finite(value, name);
  auto node = std::make_shared<NodeT<S>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool need = false;
  if (grad_mode()) {
    for (const auto& p : parents) need = need || p.node()->requires_grad;
  }
  if (need) {
    node->requires_grad = true;
    for (const auto& p : parents) {
      if (p.node()->requires_grad) node->parents.push_back(p.node());
    }
    node->backward = std::move(backward_fn);
  }
  return TensorT<S>(node);
}

// A named trainable tensor.
template <typename S>
struct ParameterT {
  std::string name;
  TensorT<S> tensor;
};

using Parameter = ParameterT<double>;

// Owns the parameters of a model; names are unique and registered once.
template <typename S>
class ParamRegistryT {
 public:
  TensorT<S> add(const std::string& name, Shape shape,
                 std::function<S()> init) {
    require(!index_.count(name), "parameter registered twice: " + name);
    std::vector<S> data(shape_size(shape));
    for (auto& x : data) x = init();
    auto t = TensorT<S>::from(std::move(data), std::move(shape));
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, t});
    return t;
  }

  std::vector<ParameterT<S>>& all() { return params_; }
  const std::vector<ParameterT<S>>& all() const { return params_; }

  TensorT<S> find(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    return params_[it->second].tensor;
  }

  std::size_t count_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<ParameterT<S>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParamRegistry = ParamRegistryT<double>;

}  // namespace csikit::nn
