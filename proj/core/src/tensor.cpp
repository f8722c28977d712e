#include "gandyn/tensor.hpp"

#include <bit>
#include <cstdint>
#include <functional>
#include <numeric>

#include "gandyn/errors.hpp"

namespace gandyn {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ContractError("tensor of shape " + to_string(shape_) + " given " +
                        std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

void Tensor::reshape(Shape shape) {
  if (element_count(shape) != data_.size()) {
    throw ContractError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = std::move(shape);
}

void Tensor::resize(const Shape& shape) {
  shape_ = shape;
  data_.resize(element_count(shape_));
}

bool Tensor::all_finite() const noexcept {
  // Branch-free exponent test so the loop vectorises; inf and NaN have an
  // all-ones exponent.
  constexpr std::uint64_t kExponent = 0x7FF0000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : data_) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & kExponent) == kExponent);
  return bad == 0;
}

}  // namespace gandyn
