#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "advreg/tensor.hpp"

namespace advreg {

class Graph;

// Handle to a value recorded in a Graph. Cheap to copy; valid while the
// owning graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Everything a backward rule needs. `input_grads[i]` is null when input i
// does not require a gradient; otherwise the rule accumulates into it.
struct BackwardContext {
  const Tensor& output;
  const Tensor& grad_output;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Gradients of a scalar with respect to the leaves that requested them.
class Gradients {
 public:
  const Tensor& of(const Var& leaf) const;
  bool has(const Var& leaf) const;

 private:
  friend class Graph;
  std::vector<std::optional<Tensor>> grads_;
};

// Tape of operation records in creation order, which is a topological order.
// Backward is single-use: a graph cannot be differentiated twice.
//
// With recording off, ops still compute values but keep no backward rules,
// so forward-only evaluation pays no differentiation cost.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Leaf value. Gradients are only tracked for leaves with requires_grad.
  Var input(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return input(std::move(value), false); }

  // Used by op implementations. Throws NumericError on non-finite output.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  Gradients backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
  };

  std::vector<Node> nodes_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace advreg
