#include "mft/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mft/errors.hpp"

namespace mft {

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != shape_size(shape)) {
    throw InputError("tensor data has " + std::to_string(data.size()) +
                     " elements but shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_size(shape)));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace mft
