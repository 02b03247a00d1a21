#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "trb/ops.hpp"
#include "trb/rng.hpp"
#include "trb/tensor.hpp"

namespace trb {

// Central-difference gradient check for a scalar-valued tensor function.
// f is called as f(tape, inputs) and must be pure. Returns the max
// relative error (unit floor: |a-b| / max(1, |a|, |b|)) over every checked
// element of every input that requires grad.
//
// max_checks_per_tensor bounds the number of perturbed elements; when a
// tensor is larger, a seeded random subset is checked.
template <typename T, typename F>
double grad_check(F f, std::vector<Tensor<T>>& inputs, double eps,
                  int max_checks_per_tensor = 200, std::uint64_t seed = 17) {
  Tape<T> tape;
  for (auto& in : inputs) in.zero_grad();
  Tensor<T> loss = f(tape, inputs);
  if (loss.numel() != 1) shape_fail("grad_check", "f must return a scalar");
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  for (auto& in : inputs) {
    if (in.requires_grad()) {
      in.grad();  // ensure allocated
      analytic.push_back(in.impl->g);
    } else {
      analytic.emplace_back();
    }
  }

  Tape<T> silent;
  silent.set_recording(false);
  auto eval = [&]() -> double {
    Tensor<T> l = f(silent, inputs);
    return static_cast<double>(l.item());
  };

  Rng rng(seed);
  double max_rel = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t].requires_grad()) continue;
    const std::size_t m = inputs[t].numel();
    std::vector<std::size_t> idx;
    if (static_cast<int>(m) <= max_checks_per_tensor) {
      idx.resize(m);
      for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    } else {
      for (int i = 0; i < max_checks_per_tensor; ++i)
        idx.push_back(static_cast<std::size_t>(rng.randint(0, static_cast<std::int64_t>(m) - 1)));
    }
    for (std::size_t i : idx) {
      T* v = inputs[t].data();
      const T orig = v[i];
      v[i] = orig + static_cast<T>(eps);
      double lp = eval();
      v[i] = orig - static_cast<T>(eps);
      double lm = eval();
      v[i] = orig;
      double fd = (lp - lm) / (2.0 * eps);
      double an = static_cast<double>(analytic[t][i]);
      double denom = std::max({1.0, std::abs(fd), std::abs(an)});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

}  // namespace trb
