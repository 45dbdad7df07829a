#include "robustft/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "robustft/errors.hpp"

namespace robustft {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor shape " + shape_to_string(shape_) + " has a zero axis");
  }
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor shape " + shape_to_string(shape_) + " has a zero axis");
  }
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " + std::to_string(data_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " into " + shape_to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + where);
}

}  // namespace robustft
