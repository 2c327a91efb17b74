#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualmotion {

// All numerics run in double precision so finite-difference gradient checks
// stay meaningful through deep compositions.
using Scalar = double;

using Shape = std::vector<int>;

/// Cache-line aligned storage. Vectorized kernels peel unaligned heads, so
/// with plain heap alignment the summation order (and the last bits of every
/// reduction) would depend on where a buffer happens to land.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<Scalar, AlignedAllocator<Scalar>>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Raised when tensor shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor. Image-like data uses NCHW ordering.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = 0.0);
  Tensor(Shape shape, std::vector<Scalar> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor filled(Shape shape, Scalar value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(Scalar value) { return Tensor(Shape{1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  std::span<Scalar> values() noexcept { return data_; }
  std::span<const Scalar> values() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessor for NCHW tensors.
  Scalar& at(int n, int c, int y, int x);
  Scalar at(int n, int c, int y, int x) const;

  /// Scalar value of a single-element tensor.
  Scalar item() const;

  Tensor reshaped(Shape shape) const;
  void fill(Scalar value);

  /// Copies sample `n` of an NCHW tensor into a [1, C, H, W] tensor.
  Tensor sample(int n) const;

  Scalar max_abs() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Buffer data_;
};

/// Concatenates tensors along the leading axis; trailing dims must agree.
Tensor stack_batch(std::span<const Tensor> items);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace dualmotion
