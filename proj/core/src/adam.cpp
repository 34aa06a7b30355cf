#include "l2aug/adam.hpp"

#include <cmath>

#include "l2aug/error.hpp"

namespace l2aug::ad {

AdamState::AdamState(const ParamSet& params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.value.shape);
    v_.emplace_back(p.value.shape);
  }
}

void AdamState::step(ParamSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size() || params.size() != m_.size()) {
    throw Error("adam: gradient/parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i].value)) {
      throw ShapeError("adam: gradient shape " + grads[i].shape_str() + " for '" +
                       params[i].name + "' does not match " + params[i].value.shape_str());
    }
    if (!grads[i].all_finite()) {
      throw NonFiniteError("adam: non-finite gradient for '" + params[i].name + "'");
    }
  }
  ++step_count_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].value;
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m.data[j] = b1 * m.data[j] + (1.0 - b1) * g.data[j];
      v.data[j] = b2 * v.data[j] + (1.0 - b2) * g.data[j] * g.data[j];
      const double m_hat = m.data[j] / bias1;
      const double v_hat = v.data[j] / bias2;
      p.data[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace l2aug::ad
