#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cagsr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass or optimizer touches it
  bool requires_grad = false;
};

// Reference-counted handle to a dense row-major array. Copies alias the same
// storage, so a parameter tensor held by a model and by its optimizer is one
// object. Use clone() for a deep copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  std::size_t dim() const { return storage_->shape.size(); }
  std::size_t size(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t numel() const { return storage_->data.size(); }

  std::span<T> data() { return storage_->data; }
  std::span<const T> data() const { return storage_->data; }
  T item() const;
  T& operator[](std::size_t i) { return storage_->data[i]; }
  const T& operator[](std::size_t i) const { return storage_->data[i]; }
  // Two-index access for matrices.
  T at(std::size_t row, std::size_t col) const {
    return storage_->data[row * storage_->shape.back() + col];
  }

  bool requires_grad() const { return storage_ && storage_->requires_grad; }
  void set_requires_grad(bool value) { storage_->requires_grad = value; }

  // Gradient access is shallow-const: a const handle still refers to
  // mutable storage, which lets backward closures hold const copies.
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<T> grad() const { return storage_->grad; }
  // Allocates a zero gradient buffer if none exists; returns it.
  std::span<T> ensure_grad() const;
  void zero_grad() const;
  void clear_grad() const { storage_->grad.clear(); }

  BasicTensor clone() const;
  void copy_from(const BasicTensor& other);

  bool same_storage(const BasicTensor& other) const {
    return storage_ == other.storage_;
  }
  const TensorStorage<T>* storage() const { return storage_.get(); }

 private:
  std::shared_ptr<TensorStorage<T>> storage_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

}  // namespace cagsr::ad
