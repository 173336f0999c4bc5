#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "melad/architecture.hpp"
#include "melad/conv.hpp"
#include "melad/layers.hpp"
#include "melad/tensor.hpp"
#include "melad/weights.hpp"

namespace melad {

enum class Label { benign = 0, malignant = 1 };

std::string to_string(Label label);

struct Prediction {
  float p_benign = 0.5f;
  float p_malignant = 0.5f;
  Label label = Label::benign;
  std::array<float, 2> logits{};
  bool tie = false;  // equal probabilities; label falls back to benign

  bool operator==(const Prediction&) const = default;
};

/// Prediction from two class logits: softmax, argmax, ties -> benign.
Prediction make_prediction(std::array<float, 2> logits);

struct ConvLayer {
  ConvParams params;
  bool has_bias = true;
};
struct NormLayer {
  BatchNormParams params;
};
struct ReluLayer {};
struct PoolLayer {};
struct SoftmaxLayer {};

using Layer = std::variant<ConvLayer, NormLayer, ReluLayer, PoolLayer, SoftmaxLayer>;

/// An executable architecture with its parameters unpacked into kernel
/// form. Immutable after construction for inference; forward() is
/// reentrant and may be called from several threads at once.
class Network {
 public:
  explicit Network(const WeightBundle& bundle);

  const ArchitectureConfig& config() const { return config_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Class logits for a (3,H,W) image or an (N,3,H,W) batch, returned as
  /// (2) or (N,2). Batchnorm runs in infer mode.
  Tensor logits(const Tensor& input) const;

  Prediction forward(const Tensor& image) const;
  std::vector<Prediction> forward_batch(const Tensor& batch) const;

  WeightBundle to_bundle() const;

 private:
  ArchitectureConfig config_;
  std::vector<Layer> layers_;
};

/// One-shot inference: validates bundle and image before any computation.
Prediction forward(const WeightBundle& weights, const Tensor& image);

}  // namespace melad
