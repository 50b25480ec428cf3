#include "advreg/graph.hpp"

#include <string>

#include "advreg/errors.hpp"

namespace advreg {

const Tensor& Var::value() const {
  if (graph_ == nullptr) throw GraphError("use of an unbound Var");
  return graph_->value(id_);
}

bool Var::requires_grad() const { return graph_ != nullptr && graph_->requires_grad(id_); }

const Tensor& Gradients::of(const Var& leaf) const {
  if (!has(leaf)) throw GraphError("no gradient recorded for node " + std::to_string(leaf.id()));
  return *grads_[leaf.id()];
}

bool Gradients::has(const Var& leaf) const { return leaf.id() < grads_.size() && grads_[leaf.id()].has_value(); }

Var Graph::input(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite value in graph input");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && recording_;
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite output from " + std::string(op));
  }
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.graph() != this) throw GraphError(std::string(op) + ": operands belong to another graph");
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (recording_ && node.requires_grad) {
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) node.inputs.push_back(in.id());
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Graph::backward(const Var& loss) {
  if (!recording_) throw GraphError("backward on a graph that was not recording");
  if (consumed_) throw GraphError("graph already consumed by a previous backward pass");
  if (&loss.graph() != this) throw GraphError("loss belongs to another graph");
  if (loss.value().size() != 1) {
    throw GraphError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  consumed_ = true;

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[loss.id()] = Tensor(loss.shape(), 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!grads[id] || !node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_values.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!grads[in]) grads[in] = Tensor::zeros_like(nodes_[in].value);
        in_grads.push_back(&*grads[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardContext{node.value, *grads[id], in_values, in_grads});
    if (!node.leaf) grads[id].reset();
  }

  Gradients out;
  out.grads_.resize(nodes_.size());
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].leaf || !nodes_[id].requires_grad) continue;
    Tensor g = grads[id] ? std::move(*grads[id]) : Tensor::zeros_like(nodes_[id].value);
    if (!g.all_finite()) throw NumericError("non-finite gradient at leaf " + std::to_string(id));
    out.grads_[id] = std::move(g);
  }
  return out;
}

}  // namespace advreg
