#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "melad/model.hpp"

namespace melad {

struct TrialStats {
  double mean_ms = 0.0;
  std::optional<double> std_ms;  // sample (n - 1) deviation; absent for one trial
};

/// Throws std::invalid_argument for an empty list.
TrialStats summarize_trials(std::span<const double> trials_ms);

struct BenchmarkReport {
  std::string model;
  std::string trainsets;  // dataset combination code, e.g. "a+b+c+d+e"
  std::vector<double> trials_ms;
  double mean_ms = 0.0;
  std::optional<double> std_ms;
  std::array<std::size_t, 3> input{3, 150, 150};
  int threads = 1;
  std::string backend = "native";  // native | browser
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::optional<double> perf_ratio;

  /// Fills mean_ms and std_ms from trials_ms.
  void summarize();
  /// Throws std::invalid_argument unless there is at least one trial, the
  /// statistics match the trials and the backend is known.
  void validate() const;

  bool operator==(const BenchmarkReport&) const = default;
};

/// Milliseconds on a monotonic clock; injectable for tests.
using Clock = std::function<double()>;
double steady_clock_ms();

struct TimingOptions {
  std::size_t trials = 3;
  std::string trainsets;
  // Only meaningful with an image path: decode + resize inside each trial.
  bool include_preprocessing = false;
  Clock clock = steady_clock_ms;
};

/// One untimed warm-up forward, then `trials` timed forwards. Weight
/// unpacking happens before any timing.
BenchmarkReport time_inference(const WeightBundle& weights, const Tensor& input,
                               const TimingOptions& options = {});
BenchmarkReport time_inference(const WeightBundle& weights, const std::filesystem::path& image,
                               const TimingOptions& options = {});

/// precision / (runtime in seconds). Throws std::invalid_argument for a
/// non-positive runtime or a precision outside [0, 1].
double perf_ratio(double precision, double mean_runtime_ms);

enum class ReportFormat { json, markdown };

/// JSON is lossless; markdown is one table row:
/// | model | trainsets | trial 1 | ... | mean ± std | backend | threads |
std::string emit_report(const BenchmarkReport& report, ReportFormat format);
/// Header and separator lines matching emit_report's markdown row.
std::string markdown_header(std::size_t trials);
BenchmarkReport report_from_json(const std::string& text);

}  // namespace melad
