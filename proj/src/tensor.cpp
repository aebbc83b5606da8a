#include "tov/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tov/error.hpp"

namespace tov {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw Error(Errc::ShapeMismatch, std::to_string(values_.size()) + " values for shape " + shape_string(shape_));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const std::string& where) const {
  if (!all_finite()) throw Error(Errc::NonFiniteActivation, "non-finite value in " + where);
}

std::vector<float> Tensor::to_f32() const { return {values_.begin(), values_.end()}; }

Tensor Tensor::from_f32(Shape shape, const std::vector<float>& values) {
  return Tensor(std::move(shape), std::vector<double>(values.begin(), values.end()));
}

}  // namespace tov
