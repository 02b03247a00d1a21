#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "trb/common.hpp"
#include "trb/rng.hpp"

namespace trb {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;  // empty until touched by backward
  bool requires_grad = false;
  bool is_leaf = true;  // false for op outputs; their grads reset each pass

  void ensure_grad() {
    if (g.empty()) g.assign(v.size(), T(0));
  }
};

// Value-semantics handle onto shared storage. Tensors are immutable after
// creation except for grad accumulation.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false) {
    Tensor t;
    t.impl = std::make_shared<TensorImpl<T>>();
    t.impl->shape = s;
    t.impl->v.assign(s.numel(), T(0));
    t.impl->requires_grad = requires_grad;
    return t;
  }
  static Tensor full(Shape s, T value, bool requires_grad = false) {
    Tensor t = zeros(s, requires_grad);
    for (auto& x : t.impl->v) x = value;
    return t;
  }
  static Tensor from(Shape s, std::vector<T> data, bool requires_grad = false) {
    if (data.size() != s.numel()) shape_fail("Tensor::from", "data length != shape product");
    Tensor t;
    t.impl = std::make_shared<TensorImpl<T>>();
    t.impl->shape = s;
    t.impl->v = std::move(data);
    t.impl->requires_grad = requires_grad;
    return t;
  }
  static Tensor randn(Shape s, Rng& rng, T scale = T(1), bool requires_grad = false) {
    Tensor t = zeros(s, requires_grad);
    for (auto& x : t.impl->v) x = static_cast<T>(rng.normal()) * scale;
    return t;
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return full(Shape{1, 1, 1, 1}, value, requires_grad);
  }

  bool defined() const { return impl != nullptr; }
  const Shape& shape() const { return impl->shape; }
  std::size_t numel() const { return impl->v.size(); }
  bool requires_grad() const { return impl->requires_grad; }
  void set_requires_grad(bool rg) { impl->requires_grad = rg; }

  T* data() { return impl->v.data(); }
  const T* data() const { return impl->v.data(); }
  std::vector<T>& values() { return impl->v; }
  const std::vector<T>& values() const { return impl->v; }

  T* grad() {
    impl->ensure_grad();
    return impl->g.data();
  }
  const std::vector<T>& grad_values() const { return impl->g; }
  bool has_grad() const { return !impl->g.empty(); }
  void zero_grad() { impl->g.clear(); }

  std::size_t index(int n, int c, int y, int x) const {
    const Shape& s = impl->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x;
  }
  T at(int n, int c, int y, int x) const { return impl->v[index(n, c, y, x)]; }
  T& at(int n, int c, int y, int x) { return impl->v[index(n, c, y, x)]; }
  T item() const { return impl->v[0]; }

  std::shared_ptr<TensorImpl<T>> impl;
};

// Ordered record of executed operations. One backward() call replays the
// record once, in reverse execution order. Grads of op outputs are reset at
// the start of each pass; leaf grads accumulate across passes.
template <typename T>
class Tape {
 public:
  struct Node {
    std::shared_ptr<TensorImpl<T>> out;
    std::function<void()> fn;
  };

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  // ins lists the differentiable inputs; leaves among them are tracked so
  // backward can fold accumulated grads in exactly once per pass.
  void record(const Tensor<T>& out, const std::vector<std::shared_ptr<TensorImpl<T>>>& ins,
              std::function<void()> fn) {
    if (!recording_) return;
    out.impl->is_leaf = false;
    for (const auto& in : ins)
      if (in->requires_grad && in->is_leaf) leaves_.push_back(in);
    nodes_.push_back(Node{out.impl, std::move(fn)});
  }

  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) shape_fail("backward", "loss must be scalar, got " + loss.shape().str());
    for (auto& n : nodes_) {
      if (!n.out->g.empty()) std::fill(n.out->g.begin(), n.out->g.end(), T(0));
    }
    // Each pass computes leaf grads from zero and adds prior totals back in
    // one shot, so repeating a pass doubles them exactly (bitwise).
    std::vector<std::pair<TensorImpl<T>*, std::vector<T>>> stash;
    std::unordered_set<TensorImpl<T>*> seen;
    for (auto& l : leaves_) {
      if (seen.insert(l.get()).second && !l->g.empty()) {
        stash.emplace_back(l.get(), std::move(l->g));
        l->g.clear();
      }
    }
    loss.impl->ensure_grad();
    loss.impl->g[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
    for (auto& [impl, old] : stash) {
      impl->ensure_grad();
      for (std::size_t i = 0; i < old.size(); ++i) impl->g[i] += old[i];
    }
  }

  void clear() {
    nodes_.clear();
    leaves_.clear();
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<TensorImpl<T>>> leaves_;
  bool recording_ = true;
};

using TensorF = Tensor<float>;
using TapeF = Tape<float>;

}  // namespace trb
