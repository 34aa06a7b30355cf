#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace l2aug::ad {

/// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }

  /// Row/column accessors for rank-2 tensors; a rank-1 tensor is treated
  /// as a single row.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace l2aug::ad
