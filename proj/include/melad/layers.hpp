#pragma once

#include <span>
#include <vector>

#include "melad/tensor.hpp"

namespace melad {

enum class NormMode { infer, train };

/// Per-channel batch normalization state. running_mean/running_var are the
/// non-trainable statistics used in infer mode; train mode folds the batch
/// statistics into them as r <- momentum * r + (1 - momentum) * batch.
struct BatchNormParams {
  std::vector<float> gamma, beta, running_mean, running_var;
  float eps = 1e-5f;
  float momentum = 0.9f;

  static BatchNormParams identity(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
  void validate(std::size_t channels) const;
};

/// Values kept by a train-mode forward pass for the backward pass.
struct BatchNormCache {
  std::vector<float> mean;
  std::vector<float> inv_std;
  Tensor normalized;  // (x - mean) * inv_std
};

struct BatchNormGrads {
  Tensor input;
  std::vector<float> gamma, beta;
};

/// y = gamma * (x - mean) / sqrt(var + eps) + beta per channel. Infer mode
/// reads the running statistics and leaves params untouched; train mode uses
/// the (biased) statistics of the whole batch over N, H and W, updates the
/// running statistics and, when cache is given, records what
/// batch_norm_backward needs.
Tensor batch_norm(const Tensor& input, BatchNormParams& params, NormMode mode,
                  BatchNormCache* cache = nullptr);
Tensor batch_norm_infer(const Tensor& input, const BatchNormParams& params);

/// Backward of a train-mode batch_norm (batch statistics depend on x).
BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormParams& params,
                                   const Tensor& grad_out);

Tensor relu(const Tensor& input);
void relu_inplace(Tensor& t);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);
void relu_backward_inplace(const Tensor& input, Tensor& grad);

/// Spatial mean of each channel: (C,H,W) -> (C), (N,C,H,W) -> (N,C).
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const std::vector<std::size_t>& input_dims,
                                const Tensor& grad_out);

/// Max-subtracted softmax. Throws std::invalid_argument on an empty input.
std::vector<float> softmax(std::span<const float> logits);

/// -sum(target * log(max(pred, 1e-12))).
float categorical_cross_entropy(std::span<const float> pred, std::span<const float> target);

/// Gradient of cross-entropy(softmax(logits), target) w.r.t. the logits,
/// which is pred - target.
std::vector<float> softmax_cross_entropy_grad(std::span<const float> pred,
                                              std::span<const float> target);

}  // namespace melad
