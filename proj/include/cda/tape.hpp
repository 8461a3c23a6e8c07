// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tape.hpp
 * @brief  Reverse-mode gradient tape over dense tensors.
 *
 * A Tape owns an append-only list of nodes. Every op appends exactly one node
 * whose inputs already exist, so the node list is a topological order and
 * backward() is a single reverse sweep. Parameters live outside the tape; a
 * parameter leaf aliases the parameter's value and accumulates straight into
 * its grad buffer.
 */
#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cda/tensor.hpp"

namespace cda {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.size(), T(0)) {}

  void zero_grad() { grad.assign(value.size(), T(0)); }
};

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape; }
  std::size_t size() const { return value().size(); }
  /// Gradient after backward(); empty when the node was unreachable from the loss.
  const std::vector<T>& grad() const { return tape_->grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  /// A non-recording tape computes forward values only (inference).
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, "constant"); }

  /// Leaf aliasing a parameter; repeated calls return the same node.
  Var<T> param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>(this, it->second);
    Node n;
    n.op = "param";
    n.param = &p;
    nodes_.push_back(std::move(n));
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Appends an op node. `backward` receives the tape and the node id and must
  /// read grad(id) and accumulate into its inputs via grad_buffer().
  Var<T> push(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward,
              const char* op) {
    for (auto in : inputs) {
      if (in >= nodes_.size()) throw std::logic_error("tape input precedes its node");
    }
    Node n;
    n.op = op;
    n.own = std::move(value);
    n.inputs = std::move(inputs);
    if (recording_) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->value : n.own;
  }

  const std::vector<T>& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->grad : n.grad;
  }

  /// Gradient accumulator for a node, allocated (zero) on first use.
  std::vector<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.param) return n.param->grad;
    if (n.grad.empty()) n.grad.assign(n.own.size(), T(0));
    return n.grad;
  }

  bool has_grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? true : !n.grad.empty();
  }

  const char* op(std::size_t id) const { return nodes_.at(id).op; }

  /// Populates gradients of `loss` with respect to every reachable node.
  /// Parameter grads accumulate onto whatever the parameters already hold.
  void backward(const Var<T>& loss) {
    if (!loss.valid() || &loss.tape() != this) {
      throw std::logic_error("backward() called on a tensor detached from this tape");
    }
    if (!recording_) throw std::logic_error("backward() called on a non-recording tape");
    if (backward_done_) throw std::logic_error("backward() already ran on this tape");
    if (value(loss.id()).size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " +
                       shape_str(value(loss.id()).shape));
    }
    backward_done_ = true;
    grad_buffer(loss.id())[0] += T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.param || !n.backward || n.grad.empty()) continue;
      n.backward(*this, id);
    }
  }

 private:
  struct Node {
    const char* op = "";
    Tensor<T> own;
    std::vector<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  bool recording_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

}  // namespace cda
