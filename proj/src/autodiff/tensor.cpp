#include "cagsr/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "cagsr/common/error.hpp"

namespace cagsr::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad)
    : storage_(std::make_shared<TensorStorage<T>>()) {
  if (ad::numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(ad::numel(shape)) + " elements, got " +
                         std::to_string(data.size()));
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
  storage_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return storage_->data[0];
}

template <typename T>
std::span<T> BasicTensor<T>::ensure_grad() const {
  if (storage_->grad.size() != storage_->data.size()) {
    storage_->grad.assign(storage_->data.size(), T(0));
  }
  return storage_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() const {
  std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  BasicTensor out(storage_->shape, storage_->data, storage_->requires_grad);
  out.storage_->grad = storage_->grad;
  return out;
}

template <typename T>
void BasicTensor<T>::copy_from(const BasicTensor& other) {
  if (other.shape() != shape()) {
    throw DimensionError("copy_from: " + shape_str(other.shape()) + " into " +
                         shape_str(shape()));
  }
  storage_->data = other.storage_->data;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace cagsr::ad
