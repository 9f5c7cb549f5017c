#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pd/common.hpp"
#include "pd/tensor.hpp"

namespace pd {

// Records one differentiable operation per node, in creation order, which is
// automatically a topological order: an op's inputs always exist before it.
// backward() replays the reachable subgraph once, in reverse.
//
// A tape and the tensors recorded on it belong to one worker at a time.
// Independent tapes may run concurrently.
template <typename T>
class Tape {
 public:
  // Registers a leaf (typically a network parameter or a probed input).
  // Allocates and zeroes the gradient buffer.
  void watch(Tensor<T>& t) {
    t.alloc_grad();
    t.tape = this;
    t.node = record({}, nullptr);
  }

  int record(std::vector<int> inputs, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(inputs), std::move(backward)});
    return int(nodes_.size()) - 1;
  }

  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar root. Gradients of every watched tensor that
  // the root depends on are accumulated into their grad buffers; each
  // reachable node's backward runs exactly once.
  void backward(const Tensor<T>& root) {
    if (root.numel() != 1)
      throw ConfigError("backward root must be scalar, got shape " + root.shape.str());
    if (root.tape != this || root.node < 0)
      throw ConfigError("backward root was not produced on this tape");

    std::vector<char> needed(nodes_.size(), 0);
    std::vector<int> stack{root.node};
    needed[root.node] = 1;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      for (int in : nodes_[id].inputs) {
        if (!needed[in]) {
          needed[in] = 1;
          stack.push_back(in);
        }
      }
    }

    (*root.grad)[0] = T(1);
    for (int id = root.node; id >= 0; --id) {
      if (needed[id] && nodes_[id].backward) nodes_[id].backward();
    }
  }

 private:
  struct Node {
    std::vector<int> inputs;
    std::function<void()> backward;  // null for leaves
  };
  std::vector<Node> nodes_;
};

// Helper for authoring differentiable ops. Collect the taped inputs, compute
// the forward value, then call finish() with a closure that pushes the
// output's gradient back into each input that has a grad buffer.
template <typename T>
class OpContext {
 public:
  void add_input(const Tensor<T>& t) {
    if (t.node < 0) return;
    if (tape_ && t.tape != tape_)
      throw ConfigError("operation mixes tensors from two different tapes");
    tape_ = t.tape;
    input_nodes_.push_back(t.node);
  }

  bool recording() const { return tape_ != nullptr; }

  // Must run before the backward closure is built: the closure captures the
  // output tensor by value, so its grad buffer has to exist at capture time.
  void prepare(Tensor<T>& out) {
    if (recording()) out.alloc_grad();
  }

  Tensor<T> finish(Tensor<T> out, std::function<void()> backward) {
    if (recording()) {
      if (!out.grad) out.alloc_grad();
      out.tape = tape_;
      out.node = tape_->record(std::move(input_nodes_), std::move(backward));
    }
    return out;
  }

 private:
  Tape<T>* tape_ = nullptr;
  std::vector<int> input_nodes_;
};

using Tapef = Tape<float>;
using Taped = Tape<double>;

}  // namespace pd
