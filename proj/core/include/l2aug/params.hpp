#pragma once

#include <string>
#include <vector>

#include "l2aug/tensor.hpp"

namespace l2aug::ad {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered collection of named parameter tensors. Order is the declaration
/// order and is stable, which keeps initialization, optimizer state, and
/// checkpoints aligned.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return items_.size(); }
  NamedTensor& operator[](std::size_t i) { return items_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return items_[i]; }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<NamedTensor> items_;
};

}  // namespace l2aug::ad
