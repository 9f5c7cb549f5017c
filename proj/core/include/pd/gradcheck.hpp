#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pd/ops.hpp"
#include "pd/tape.hpp"
#include "pd/tensor.hpp"

namespace pd {

template <typename T>
void unwatch(Tensor<T>& t) {
  t.grad = nullptr;
  t.tape = nullptr;
  t.node = -1;
}

// Validation oracle for every analytic gradient in the engine: compares the
// reverse-mode gradient of f at x against central finite differences
// (f(x+h*e_i) - f(x-h*e_i)) / 2h. Returns the max elementwise relative error
// with denominator max(|analytic|, |numeric|, 1e-8).
//
// f must be deterministic and is expected to run in 64-bit precision; it is
// called once on a tape with x watched, then 2*numel times untaped.
template <typename T>
T finite_difference_check(
    const std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>& f,
    const Tensor<T>& x0, T step);

// Same check against several tensors at once (e.g. every parameter of a
// network). f reads the tensors through the pointers; they are watched for
// the analytic pass and perturbed in place for the numeric one.
template <typename T>
T finite_difference_check_many(const std::function<Tensor<T>(Tape<T>&)>& f,
                               const std::vector<Tensor<T>*>& params, T step);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
};

// Canonical 64-bit finite-difference sweep over the whole differentiable
// surface: layer ops, the horizontal sampler, each loss term, and the full
// multi-scale objective on a 32x16 toy scene. Inputs are drawn away from the
// kinks (integer sample coordinates, zero L1 gaps) so central differences
// with the default step are valid.
std::vector<GradCheckResult> gradient_suite(std::uint64_t seed, double step = 1e-5);

}  // namespace pd
