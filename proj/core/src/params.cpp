#include "l2aug/params.hpp"

#include "l2aug/error.hpp"

namespace l2aug::ad {

Tensor& ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw Error("params: duplicate parameter '" + name + "'");
  items_.push_back({std::move(name), std::move(value)});
  return items_.back().value;
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& item : items_) {
    if (item.name == name) return item.value;
  }
  throw Error("params: unknown parameter '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.name == name) return true;
  }
  return false;
}

}  // namespace l2aug::ad
