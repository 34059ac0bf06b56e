#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mft/quantizer.hpp"

namespace mft {

struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  // Leading dimension (batch) and the product of the rest.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t row_size() const { return rows() ? size() / rows() : 0; }

  bool all_finite() const;
};

std::string shape_string(const Shape& shape);

}  // namespace mft
