#pragma once

#include <functional>
#include <vector>

#include "l2aug/tape.hpp"
#include "l2aug/tensor.hpp"

namespace l2aug::ad {

/// Builds a scalar-valued graph from the leafed parameters, in order.
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares reverse-mode gradients of f against central finite differences
/// at the given point. Returns the maximum over all parameter elements of
/// |analytic - numeric| / max(1, |numeric|). eps must lie in (0, 1e-2].
double grad_check(const std::vector<Tensor>& params, const GraphFn& f, double eps = 1e-5);

}  // namespace l2aug::ad
