#include "dualmotion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dualmotion {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Scalar> values) : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " + to_string(shape_));
  }
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

Scalar& Tensor::at(int n, int c, int y, int x) {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

Scalar Tensor::at(int n, int c, int y, int x) const {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

Scalar Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::fill(Scalar value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::sample(int n) const {
  if (rank() < 1 || n < 0 || n >= shape_[0]) throw ShapeError("sample index out of range");
  Shape s = shape_;
  s[0] = 1;
  const std::size_t stride = data_.size() / shape_[0];
  Tensor out;
  out.shape_ = std::move(s);
  out.data_.assign(data_.begin() + n * stride, data_.begin() + (n + 1) * stride);
  return out;
}

Scalar Tensor::max_abs() const {
  Scalar m = 0;
  for (Scalar v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch of zero tensors");
  Shape s = items.front().shape();
  if (s.empty()) throw ShapeError("stack_batch needs ranked tensors");
  int total = 0;
  for (const auto& t : items) {
    const Shape& ts = t.shape();
    if (ts.size() != s.size() || !std::equal(ts.begin() + 1, ts.end(), s.begin() + 1)) {
      throw ShapeError("stack_batch shape mismatch " + to_string(ts) + " vs " + to_string(s));
    }
    total += ts[0];
  }
  s[0] = total;
  Tensor out(s);
  Scalar* dst = out.data();
  for (const auto& t : items) dst = std::copy(t.data(), t.data() + t.size(), dst);
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace dualmotion
