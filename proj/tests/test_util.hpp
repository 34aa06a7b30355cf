#pragma once

#include <vector>

#include "l2aug/rng.hpp"
#include "l2aug/tensor.hpp"

namespace testutil {

inline l2aug::ad::Tensor random_tensor(std::vector<std::size_t> shape, l2aug::Rng& rng,
                                       double lo = -1.0, double hi = 1.0) {
  l2aug::ad::Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.range(lo, hi);
  return t;
}

}  // namespace testutil
