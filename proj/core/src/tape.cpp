#include "traitfuse/tape.hpp"

#include <utility>

#include "traitfuse/errors.hpp"

namespace traitfuse {

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("value() on an unbound Var");
  return tape_->value(id_);
}

Var Tape::input(Tensor value) {
  if (backward_started_) throw UsageError("tape is read-only once backward has started");
  Node node;
  node.op = "input";
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (backward_started_) throw UsageError("tape is read-only once backward has started");
  Node node;
  node.op = "constant";
  node.owned = std::move(value);
  node.requires_grad = false;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Parameter& parameter) {
  if (auto it = param_nodes_.find(&parameter); it != param_nodes_.end()) return Var(this, it->second);
  if (backward_started_) throw UsageError("tape is read-only once backward has started");
  Node node;
  node.op = "param";
  node.external = &parameter.value;
  nodes_.push_back(std::move(node));
  const auto id = nodes_.size() - 1;
  param_nodes_.emplace(&parameter, id);
  return Var(this, id);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (backward_started_) throw UsageError("tape is read-only once backward has started");
  for (auto in : inputs) {
    if (in >= nodes_.size()) throw UsageError("op '" + std::string(op) + "' references an unknown node");
  }
  Node node;
  node.op = op;
  node.owned = std::move(value);
  node.requires_grad = false;
  for (auto in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t node) const {
  const auto& n = nodes_.at(node);
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(std::size_t node) {
  auto& n = nodes_.at(node);
  if (!n.has_grad) {
    n.grad = Tensor(value(node).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw UsageError("loss does not belong to this tape");
  if (backward_started_) throw UsageError("backward already ran on this tape");
  if (value(loss.id()).size() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + shape_string(value(loss.id()).shape()));
  }
  backward_started_ = true;
  grad_buffer(loss.id())[0] = 1.0;
  backward_order_.clear();
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    backward_order_.push_back(i);
    if (n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad(const Var& v) const {
  const auto& n = nodes_.at(v.id());
  if (n.has_grad) return n.grad;
  return Tensor(value(v.id()).shape());
}

const Tensor* Tape::grad_if_any(std::size_t node) const {
  const auto& n = nodes_.at(node);
  return n.has_grad ? &n.grad : nullptr;
}

const Tensor* Tape::gradient(const Parameter& parameter) const {
  auto it = param_nodes_.find(&parameter);
  if (it == param_nodes_.end()) return nullptr;
  return grad_if_any(it->second);
}

}  // namespace traitfuse
