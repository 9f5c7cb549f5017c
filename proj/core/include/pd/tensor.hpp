#pragma once

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "pd/common.hpp"

namespace pd {

template <typename T>
class Tape;

// Dense NCHW array handle. Copies are shallow: they share the value buffer,
// the gradient buffer and the tape node. A tensor participates in reverse-mode
// differentiation iff it has a grad buffer and a node id on some live tape;
// everything else is a plain constant.
template <typename T>
struct Tensor {
  Shape shape{};
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;  // same extents as data when present
  Tape<T>* tape = nullptr;
  int node = -1;

  Tensor() = default;

  static Tensor zeros(Shape s) {
    Tensor t;
    t.shape = s;
    t.data = std::make_shared<std::vector<T>>(size_t(s.numel()), T(0));
    return t;
  }

  static Tensor full(Shape s, T value) {
    Tensor t = zeros(s);
    for (auto& v : *t.data) v = value;
    return t;
  }

  static Tensor scalar(T value) { return full(scalar_shape(), value); }

  static Tensor from_vector(Shape s, std::vector<T> values) {
    if (std::int64_t(values.size()) != s.numel())
      throw ConfigError("tensor buffer length " + std::to_string(values.size()) +
                        " does not match shape " + s.str());
    Tensor t;
    t.shape = s;
    t.data = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  bool defined() const { return data != nullptr; }
  std::int64_t numel() const { return shape.numel(); }
  bool requires_grad() const { return grad != nullptr; }

  std::vector<T>& values() { return *data; }
  const std::vector<T>& values() const { return *data; }
  std::vector<T>& grads() { return *grad; }
  const std::vector<T>& grads() const { return *grad; }

  T item() const {
    if (numel() != 1)
      throw ConfigError("item() called on non-scalar tensor of shape " + shape.str());
    return (*data)[0];
  }

  std::int64_t index(int n, int c, int y, int x) const {
    return ((std::int64_t(n) * shape.c + c) * shape.h + y) * shape.w + x;
  }
  T at(int n, int c, int y, int x) const { return (*data)[index(n, c, y, x)]; }
  T& at(int n, int c, int y, int x) { return (*data)[index(n, c, y, x)]; }

  // Shares the value buffer but drops all differentiation state. Used where a
  // quantity must act as a static copy that blocks gradient flow.
  Tensor detach() const {
    Tensor t;
    t.shape = shape;
    t.data = data;
    return t;
  }

  // Deep copy of the values only.
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(*data);
    return t;
  }

  void alloc_grad() {
    grad = std::make_shared<std::vector<T>>(size_t(numel()), T(0));
  }

  void zero_grad() {
    if (grad)
      for (auto& g : *grad) g = T(0);
  }

  bool all_finite() const {
    for (T v : *data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace pd
