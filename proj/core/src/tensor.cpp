#include "l2aug/tensor.hpp"

#include <cmath>
#include <sstream>

#include "l2aug/error.hpp"

namespace l2aug::ad {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape_in, double fill)
    : shape(std::move(shape_in)), data(shape_numel(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str());
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::row(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (ndim() == 2) return shape[0];
  if (ndim() == 1) return 1;
  throw ShapeError("tensor: rows() requires rank 1 or 2, got " + shape_str());
}

std::size_t Tensor::cols() const {
  if (ndim() == 2) return shape[1];
  if (ndim() == 1) return shape[0];
  throw ShapeError("tensor: cols() requires rank 1 or 2, got " + shape_str());
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

}  // namespace l2aug::ad
