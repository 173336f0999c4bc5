#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "melad/architecture.hpp"
#include "melad/tensor.hpp"

namespace melad {

enum class FormatErrorKind {
  bad_magic,
  unsupported_version,
  checksum_mismatch,
  truncated_stream,
  shape_mismatch,
  malformed,
};

std::string to_string(FormatErrorKind kind);

/// Failure to read a weight bundle. kind() tells the causes apart; what()
/// starts with the kind's text, e.g. "bad magic: ...".
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& detail)
      : std::runtime_error(to_string(kind) + ": " + detail), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

/// Parameter tensors bound to the architecture they belong to.
///
/// Tensor names are "layers.<i>.<field>", i being the layer index: conv
/// layers own "kernel" (out, in, k, k) and, with bias, "bias" (out);
/// batchnorm layers own "gamma", "beta", "running_mean" and "running_var".
struct WeightBundle {
  ArchitectureConfig config;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  /// Throws FormatError(shape_mismatch) unless the tensors are exactly the
  /// ones the config requires, in layer order, with matching extents.
  void validate() const;

  bool operator==(const WeightBundle&) const = default;
};

/// Names and extents the config requires, in file order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(
    const ArchitectureConfig& config);

/// All-zero conv weights, identity batchnorm (gamma 1, beta 0, mean 0,
/// var 1).
WeightBundle zero_weights(const ArchitectureConfig& config);

// File layout, all integers little-endian:
//   "MELD" | u32 version = 1 | u64 config length | config JSON (UTF-8)
//   | per tensor: u16 name length, name, u8 rank, u32 extents..., f32 data
//   | u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> encode_weights(const WeightBundle& bundle);
WeightBundle decode_weights(std::span<const std::uint8_t> bytes);

void save_weights(const WeightBundle& bundle, const std::filesystem::path& path);
WeightBundle load_weights(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace melad
