#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "melad/dataset.hpp"
#include "melad/model.hpp"
#include "melad/parallel.hpp"
#include "melad/rng.hpp"

namespace melad {

struct AugmentConfig {
  double rotation_degrees = 30.0;  // angle drawn from [-r, r]
  double rotation_prob = 0.5;
  double zoom_min = 0.8;
  double zoom_max = 1.25;
  double zoom_prob = 0.5;
  double crop_fraction = 0.9;
  double crop_prob = 0.5;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;

  static AugmentConfig none();
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  bool balance = true;
  // Square training resolution; 0 uses the architecture's input size.
  std::size_t image_size = 0;
  ExecMode mode = ExecMode::deterministic;

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg, int indent = 2);
TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct AdamState {
  std::vector<std::vector<float>> m, v;
  std::uint64_t t = 0;
};

/// One Adam update with bias correction over a list of parameter tensors.
/// Moments are allocated on the first call; shapes must agree afterwards.
void adam_step(const std::vector<std::span<float>>& params,
               const std::vector<std::span<const float>>& grads, AdamState& state,
               const TrainConfig& cfg);

Tensor hflip(const Tensor& chw);
Tensor vflip(const Tensor& chw);

/// Random rotation (bilinear, reflect fill), zoom, crop-and-resize and
/// flips, each applied with its configured probability. The label is never
/// touched; 1x1 images are returned unchanged.
Tensor augment(const Tensor& chw, Rng& rng, const AugmentConfig& cfg);

/// Oversamples the minority class until both classes have the same count.
/// Every record of the minority class gets a distinct augment_seed; extra
/// copies are appended after the original records. Throws DataError when a
/// class is empty.
DatasetManifest balance_50_50(const DatasetManifest& manifest, Rng& rng);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean categorical cross-entropy
  double accuracy = 0.0;  // fraction of training samples classified right

  bool operator==(const EpochStats&) const = default;
};

std::string history_to_csv(const std::vector<EpochStats>& history);

/// He-uniform conv kernels, zero biases, identity batchnorm.
WeightBundle initial_weights(const ArchitectureConfig& arch, std::uint64_t seed);

/// Holds a network and its optimizer state; step() runs one batch.
class Trainer {
 public:
  Trainer(const WeightBundle& init, const TrainConfig& cfg);

  struct StepResult {
    double loss_sum = 0.0;
    std::size_t correct = 0;
  };
  /// Forward in train mode, backward, one Adam update. batch is (N,3,H,W).
  StepResult step(const Tensor& batch, const std::vector<Label>& labels);

  const Network& network() const { return net_; }
  WeightBundle weights() const { return net_.to_bundle(); }

 private:
  Network net_;
  TrainConfig cfg_;
  AdamState adam_;
};

struct TrainResult {
  WeightBundle weights;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Full training run. Deterministic given (cfg.seed, manifest) when
/// cfg.mode is deterministic, independent of the thread count.
TrainResult train(const ArchitectureConfig& arch, const DatasetManifest& manifest,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Writes n_per_class PNGs of each class under out_dir/benign and
/// out_dir/malignant plus out_dir/manifest.csv. Benign images hold a smooth
/// blotchy lesion; malignant ones a darker, bluish lesion covered in
/// high-frequency speckle.
DatasetManifest synthetic_dataset(std::uint64_t seed, std::size_t n_per_class, std::size_t size,
                                  const std::filesystem::path& out_dir);

}  // namespace melad
