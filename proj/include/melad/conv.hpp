#pragma once

#include <cstddef>
#include <vector>

#include "melad/parallel.hpp"
#include "melad/tensor.hpp"

namespace melad {

enum class Padding { same };

/// Weights of one dilated convolution.
///
/// kernel has extents (out_ch, in_ch, k, k) with odd k; bias has out_ch
/// entries (all zero for bias-free layers). With "same" padding the zero
/// margin on each side is dilation * (k - 1) / 2, so spatial extents are
/// preserved for every dilation.
struct ConvParams {
  Tensor kernel;
  std::vector<float> bias;
  int dilation = 1;
  Padding padding = Padding::same;

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t kernel_size() const { return kernel.dim(2); }
  std::size_t margin() const {
    return static_cast<std::size_t>(dilation) * (kernel_size() - 1) / 2;
  }

  /// Throws ShapeError for an even or non-square kernel, dilation < 1 or a
  /// bias of the wrong length.
  void validate() const;
};

struct ConvGrads {
  Tensor input;
  Tensor kernel;
  std::vector<float> bias;
};

/// Dilated cross-correlation with zero "same" padding:
///
///   out(o, p) = bias[o] + sum_{c,t} in(c, p + l*t - margin) * kernel(o, c, t)
///
/// The true convolution sum_{s + l*t = p} F(s) k(t) is the same operation
/// with the kernel rotated by 180 degrees. Accepts (C,H,W) or (N,C,H,W)
/// input and returns a tensor of the same rank with out_ch channels.
///
/// Each output element accumulates its taps in a fixed order (input
/// channel, then kernel row, then kernel column) and work is split across
/// threads by output tile only, so results do not depend on thread count.
Tensor conv2d_dilated(const Tensor& input, const ConvParams& params);

/// Gradients of sum(grad_out * conv2d_dilated(input, params)) with respect
/// to the input, kernel and bias. In ExecMode::deterministic the kernel
/// gradient is reduced over images and pixels in a fixed order; fast mode
/// splits the pixel reduction into per-thread bands.
ConvGrads conv2d_dilated_backward(const Tensor& input, const ConvParams& params,
                                  const Tensor& grad_out,
                                  ExecMode mode = ExecMode::deterministic,
                                  bool need_input_grad = true);

/// Serial triple-loop kernels with no blocking or threading. Kept as the
/// baseline for tests and the kernel benchmark.
namespace reference {

Tensor conv2d_dilated(const Tensor& input, const ConvParams& params);
ConvGrads conv2d_dilated_backward(const Tensor& input, const ConvParams& params,
                                  const Tensor& grad_out);

}  // namespace reference

}  // namespace melad
