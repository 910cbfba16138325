#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "traitfuse/tensor.hpp"

namespace traitfuse {

/// A named trainable tensor. Lives outside any tape; a tape references it
/// read-only while recording and reports its gradient after backward.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape.
///
/// Nodes are appended in creation order, so every node's inputs precede it and
/// the node list is a topological order. backward() walks it in exact reverse.
/// Recording after backward() has started is a usage error.
class Tape {
 public:
  /// Reads the node's output gradient via grad_of(node) and accumulates into
  /// its inputs through grad_buffer(input).
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var input(Tensor value);
  /// Leaf that never needs a gradient (data fed into the graph).
  Var constant(Tensor value);
  /// Leaf bound to an external parameter. Repeated calls for the same
  /// parameter return the same node.
  Var param(const Parameter& parameter);
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  void backward(const Var& loss);
  bool backward_started() const { return backward_started_; }

  std::size_t size() const { return nodes_.size(); }
  /// True when some tracked leaf feeds this node. Backward functions skip
  /// inputs for which this is false.
  bool needs_grad(std::size_t node) const { return nodes_[node].requires_grad; }
  const Tensor& value(std::size_t node) const;
  std::string_view op(std::size_t node) const { return nodes_.at(node).op; }
  const std::vector<std::size_t>& inputs(std::size_t node) const { return nodes_.at(node).inputs; }

  /// Gradient of the loss w.r.t. a node; zeros when nothing reached it.
  Tensor grad(const Var& v) const;
  /// Gradient buffer if any gradient reached the node, else nullptr.
  const Tensor* grad_if_any(std::size_t node) const;
  /// Gradient w.r.t. a parameter, or nullptr when the parameter is not on
  /// this tape or received no gradient.
  const Tensor* gradient(const Parameter& parameter) const;

  /// Output gradient of a node during backward. Always allocated when the
  /// node's backward function runs.
  const Tensor& grad_of(std::size_t node) const { return nodes_[node].grad; }
  /// Mutable gradient buffer of a node, zero-allocated on first use.
  Tensor& grad_buffer(std::size_t node);

  /// Node ids in the order the last backward pass processed them.
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

 private:
  struct Node {
    std::string_view op;
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = true;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::vector<std::size_t> backward_order_;
  bool backward_started_ = false;
};

}  // namespace traitfuse
