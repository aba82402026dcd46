#include "mea/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mea/errors.hpp"

namespace mea {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw InputError("tensor data size " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.size() != data_.size()) {
    throw InputError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mea
