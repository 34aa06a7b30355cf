#pragma once

#include <cstdint>
#include <vector>

#include "l2aug/params.hpp"
#include "l2aug/tensor.hpp"

namespace l2aug::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment estimation with bias correction. One state instance
/// tracks one parameter set; accumulator shapes mirror parameter shapes.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParamSet& params, AdamConfig config);

  /// Applies one bias-corrected update in place. grads must be index-aligned
  /// with params; a non-finite gradient raises an error naming the parameter.
  void step(ParamSet& params, const std::vector<Tensor>& grads);

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t step_count_ = 0;
};

}  // namespace l2aug::ad
