#include "melad/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace melad {

std::size_t checked_volume(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
  std::size_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw ShapeError("tensor extents must be >= 1: " + shape_string(dims));
    n *= d;
  }
  return n;
}

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> dims, float fill)
    : dims_(std::move(dims)), data_(checked_volume(dims_), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (checked_volume(dims_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match extents " + shape_string(dims_));
  }
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= dims_.size()) throw std::out_of_range("tensor dim index out of range");
  return dims_[i];
}

std::size_t Tensor::channels() const {
  if (rank() < 3) throw ShapeError("channels() needs rank >= 3, got " + shape_string(dims_));
  return dims_[rank() - 3];
}

std::size_t Tensor::height() const {
  if (rank() < 3) throw ShapeError("height() needs rank >= 3, got " + shape_string(dims_));
  return dims_[rank() - 2];
}

std::size_t Tensor::width() const {
  if (rank() < 3) throw ShapeError("width() needs rank >= 3, got " + shape_string(dims_));
  return dims_[rank() - 1];
}

std::size_t Tensor::batch() const {
  if (rank() == 4) return dims_[0];
  if (rank() == 3) return 1;
  throw ShapeError("batch() needs rank 3 or 4, got " + shape_string(dims_));
}

float& Tensor::at(std::size_t i) {
  if (i >= data_.size()) throw std::out_of_range("tensor index out of range");
  return data_[i];
}

float Tensor::at(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("tensor index out of range");
  return data_[i];
}

std::size_t Tensor::offset(std::size_t c, std::size_t y, std::size_t x) const {
  if (rank() != 3) throw ShapeError("(c,y,x) access needs rank 3, got " + shape_string(dims_));
  if (c >= dims_[0] || y >= dims_[1] || x >= dims_[2]) {
    throw std::out_of_range("tensor element out of range");
  }
  return (c * dims_[1] + y) * dims_[2] + x;
}

float& Tensor::at(std::size_t c, std::size_t y, std::size_t x) { return data_[offset(c, y, x)]; }
float Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  return data_[offset(c, y, x)];
}

float& Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  if (rank() != 4) throw ShapeError("(n,c,y,x) access needs rank 4, got " + shape_string(dims_));
  if (n >= dims_[0] || c >= dims_[1] || y >= dims_[2] || x >= dims_[3]) {
    throw std::out_of_range("tensor element out of range");
  }
  return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
}

float Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
  return const_cast<Tensor*>(this)->at(n, c, y, x);
}

std::span<const float> Tensor::image(std::size_t n) const {
  const std::size_t plane = channels() * height() * width();
  if (n >= batch()) throw std::out_of_range("batch index out of range");
  return std::span<const float>(data_).subspan(n * plane, plane);
}

std::span<float> Tensor::image(std::size_t n) {
  const std::size_t plane = channels() * height() * width();
  if (n >= batch()) throw std::out_of_range("batch index out of range");
  return std::span<float>(data_).subspan(n * plane, plane);
}

Tensor Tensor::reshaped(std::vector<std::size_t> dims) const {
  return Tensor(std::move(dims), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace melad
