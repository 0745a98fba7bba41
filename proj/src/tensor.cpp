#include "quan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace quan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  for (auto e : shape_)
    if (e == 0) throw Error("tensor extents must be positive, got " + shape_string(shape_));
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) throw Error("tensor extents must be positive, got " + shape_string(shape_));
  if (shape_numel(shape_) != data_.size())
    throw Error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                shape_string(shape_));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (shape_.empty()) return 0;
  return data_.size() / shape_.back();
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return shape_.empty() ? 0 : shape_.back();
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw Error("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace quan
