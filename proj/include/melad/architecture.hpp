#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace melad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LayerKind { conv, batchnorm, relu, global_avg_pool, softmax, dense };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // conv / dense
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel_size = 1;
  int dilation = 1;
  int stride = 1;  // only meaningful in reference-only configs
  bool bias = true;
  // batchnorm; resolved from the preceding conv when not given explicitly
  std::size_t channels = 0;

  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t k, int dilation,
                        bool bias = true);
  static LayerSpec batchnorm(std::size_t channels = 0);
  static LayerSpec of(LayerKind kind);

  bool operator==(const LayerSpec&) const = default;
};

struct InputSpec {
  std::size_t channels = 3;
  std::size_t height = 150;
  std::size_t width = 150;
  bool operator==(const InputSpec&) const = default;
};

/// Ordered layer list plus the expected input. Executable configs are
/// stride-1 and fully convolutional up to a single global_avg_pool that
/// yields the two class logits, followed by softmax. Reference-only configs
/// (e.g. the shipped ResNet50 description) exist for parameter counting and
/// may use strides, dense layers and branching channel counts.
struct ArchitectureConfig {
  std::string name;
  InputSpec input;
  std::vector<LayerSpec> layers;
  bool reference_only = false;

  /// Fills in batchnorm channel counts from the preceding conv, then
  /// validates.
  void resolve();
  /// Checks every structural rule; throws ConfigError naming the offending
  /// layer.
  void validate() const;

  bool operator==(const ArchitectureConfig&) const = default;
};

inline constexpr std::size_t kNumClasses = 2;

/// Mela-D: seven 3x3 conv/batchnorm/relu blocks with dilations
/// 1,1,1,2,4,8,1 at constant width, a 1x1 conv to two logits, global
/// average pooling and softmax. No striding or pooling before the head.
ArchitectureConfig default_mela_d(std::size_t channels = 128);

/// "mela-d" (C = 128) or "mela-d-lite" (C = 32).
ArchitectureConfig preset_architecture(const std::string& name);

struct ParamCount {
  std::uint64_t trainable = 0;
  std::uint64_t non_trainable = 0;  // batchnorm running statistics
  std::uint64_t total() const { return trainable + non_trainable; }
};

/// conv: k*k*in*out (+out with bias); dense: in*out (+out); batchnorm:
/// 2*channels trainable and 2*channels non-trainable.
ParamCount count_params(const ArchitectureConfig& config);

/// 1 + sum over conv layers of dilation * (k - 1).
std::size_t receptive_field(const ArchitectureConfig& config);

/// Operation count of one forward pass at the given spatial size. A conv
/// costs 2*k*k*in*out*H*W (multiply and add); elementwise layers cost per
/// element: batchnorm 2, relu 1, global_avg_pool 1, softmax 3.
std::uint64_t count_flops(const ArchitectureConfig& config, std::size_t height, std::size_t width);

// JSON: { "name", "input": {"channels","height","width"}, "layers": [...] }
std::string architecture_to_json(const ArchitectureConfig& config, int indent = -1);
ArchitectureConfig architecture_from_json(const std::string& text);
ArchitectureConfig load_architecture(const std::filesystem::path& path);
void save_architecture(const ArchitectureConfig& config, const std::filesystem::path& path);

}  // namespace melad
