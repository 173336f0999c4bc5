#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "melad/errors.hpp"

namespace melad {

/// Dense row-major float32 array of rank 1..4.
///
/// Rank-3 tensors are (channels, height, width); rank-4 tensors carry a
/// leading batch extent. Element (c, y, x) of a rank-3 tensor lives at
/// data[(c * H + y) * W + x]. Indexed accessors check bounds and throw
/// std::out_of_range rather than wrapping.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, float fill = 0.0f);
  Tensor(std::vector<std::size_t> dims, std::vector<float> data);

  static Tensor chw(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f) {
    return Tensor({c, h, w}, fill);
  }
  static Tensor nchw(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                     float fill = 0.0f) {
    return Tensor({n, c, h, w}, fill);
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  // Trailing (C, H, W) regardless of whether a batch extent is present.
  std::size_t channels() const;
  std::size_t height() const;
  std::size_t width() const;
  std::size_t batch() const;

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  float& at(std::size_t i);
  float at(std::size_t i) const;
  float& at(std::size_t c, std::size_t y, std::size_t x);
  float at(std::size_t c, std::size_t y, std::size_t x) const;
  float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

  /// View of image n of a rank-4 tensor (or the whole tensor when rank 3).
  std::span<const float> image(std::size_t n) const;
  std::span<float> image(std::size_t n);

  /// Same data with different extents; the element count must match.
  Tensor reshaped(std::vector<std::size_t> dims) const;

  void fill(float v);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::size_t c, std::size_t y, std::size_t x) const;

  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

std::string shape_string(const std::vector<std::size_t>& dims);

/// Product of extents; throws ShapeError on an empty list or a zero extent.
std::size_t checked_volume(const std::vector<std::size_t>& dims);

}  // namespace melad
