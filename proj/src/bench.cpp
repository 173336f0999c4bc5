#include "melad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "melad/image.hpp"
#include "melad/parallel.hpp"

namespace melad {

using nlohmann::json;

TrialStats summarize_trials(std::span<const double> t) {
  if (t.empty()) throw std::invalid_argument("no trial timings");
  const double n = static_cast<double>(t.size());
  double sum = 0.0;
  for (double v : t) sum += v;
  TrialStats s;
  s.mean_ms = sum / n;
  if (t.size() >= 2) {
    double ss = 0.0;
    for (double v : t) ss += (v - s.mean_ms) * (v - s.mean_ms);
    s.std_ms = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

void BenchmarkReport::summarize() {
  const auto s = summarize_trials(trials_ms);
  mean_ms = s.mean_ms;
  std_ms = s.std_ms;
}

void BenchmarkReport::validate() const {
  const auto s = summarize_trials(trials_ms);
  const auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b));
  };
  if (!close(mean_ms, s.mean_ms)) throw std::invalid_argument("report mean does not match trials");
  if (std_ms.has_value() != s.std_ms.has_value() || (std_ms && !close(*std_ms, *s.std_ms))) {
    throw std::invalid_argument("report std does not match trials");
  }
  if (backend != "native" && backend != "browser") {
    throw std::invalid_argument("backend must be native or browser, got \"" + backend + "\"");
  }
}

double steady_clock_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

namespace {

BenchmarkReport base_report(const Network& net, const std::vector<std::size_t>& dims,
                            const TimingOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("trials must be >= 1");
  BenchmarkReport r;
  r.model = net.config().name;
  r.trainsets = options.trainsets;
  r.input = {dims[0], dims[1], dims[2]};
  r.threads = num_threads();
  r.params = count_params(net.config()).trainable;
  r.flops = count_flops(net.config(), dims[1], dims[2]);
  return r;
}

template <class Run>
void run_trials(BenchmarkReport& r, const TimingOptions& options, Run run) {
  const Clock clock = options.clock ? options.clock : Clock(steady_clock_ms);
  run();  // warm-up
  for (std::size_t i = 0; i < options.trials; ++i) {
    const double t0 = clock();
    run();
    r.trials_ms.push_back(clock() - t0);
  }
  r.summarize();
}

}  // namespace

BenchmarkReport time_inference(const WeightBundle& weights, const Tensor& input,
                               const TimingOptions& options) {
  const Network net(weights);
  if (input.rank() != 3) throw ShapeError("benchmark input must be one (3,H,W) image");
  BenchmarkReport r = base_report(net, input.dims(), options);
  run_trials(r, options, [&] { (void)net.forward(input); });
  return r;
}

BenchmarkReport time_inference(const WeightBundle& weights, const std::filesystem::path& image,
                               const TimingOptions& options) {
  const Network net(weights);
  const auto& in = net.config().input;
  const Tensor pre = preprocess(image, in.height, in.width);
  BenchmarkReport r = base_report(net, pre.dims(), options);
  if (options.include_preprocessing) {
    run_trials(r, options, [&] { (void)net.forward(preprocess(image, in.height, in.width)); });
  } else {
    run_trials(r, options, [&] { (void)net.forward(pre); });
  }
  return r;
}

double perf_ratio(double precision, double mean_runtime_ms) {
  if (!(mean_runtime_ms > 0.0)) throw std::invalid_argument("runtime must be positive");
  if (!(precision >= 0.0 && precision <= 1.0)) {
    throw std::invalid_argument("precision must lie in [0, 1]");
  }
  return precision / (mean_runtime_ms / 1000.0);
}

namespace {

std::string fixed1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

std::string markdown_header(std::size_t trials) {
  std::string h = "| Classifier | Trainsets |";
  std::string sep = "|---|---|";
  for (std::size_t i = 1; i <= trials; ++i) {
    h += " Trial " + std::to_string(i) + " (ms) |";
    sep += "---:|";
  }
  h += " Average (ms) | Backend | Threads |\n";
  sep += "---:|---|---:|\n";
  return h + sep;
}

std::string emit_report(const BenchmarkReport& r, ReportFormat format) {
  if (format == ReportFormat::markdown) {
    std::string row = "| " + r.model + " | " + (r.trainsets.empty() ? "-" : r.trainsets) + " |";
    for (double t : r.trials_ms) row += " " + fixed1(t) + " |";
    row += " " + fixed1(r.mean_ms);
    if (r.std_ms) row += " ± " + fixed1(*r.std_ms);
    row += " | " + r.backend + " | " + std::to_string(r.threads) + " |";
    return row;
  }
  json j{
      {"model", r.model},
      {"trainsets", r.trainsets},
      {"trials_ms", r.trials_ms},
      {"mean_ms", r.mean_ms},
      {"std_ms", r.std_ms ? json(*r.std_ms) : json(nullptr)},
      {"input", r.input},
      {"threads", r.threads},
      {"backend", r.backend},
      {"params", r.params},
      {"flops", r.flops},
      {"perf_ratio", r.perf_ratio ? json(*r.perf_ratio) : json(nullptr)},
  };
  return j.dump(2);
}

BenchmarkReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    BenchmarkReport r;
    r.model = j.at("model").get<std::string>();
    r.trainsets = j.at("trainsets").get<std::string>();
    r.trials_ms = j.at("trials_ms").get<std::vector<double>>();
    r.mean_ms = j.at("mean_ms").get<double>();
    if (!j.at("std_ms").is_null()) r.std_ms = j.at("std_ms").get<double>();
    r.input = j.at("input").get<std::array<std::size_t, 3>>();
    r.threads = j.at("threads").get<int>();
    r.backend = j.at("backend").get<std::string>();
    r.params = j.at("params").get<std::uint64_t>();
    r.flops = j.at("flops").get<std::uint64_t>();
    if (j.contains("perf_ratio") && !j.at("perf_ratio").is_null()) {
      r.perf_ratio = j.at("perf_ratio").get<double>();
    }
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("benchmark report: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("benchmark report: ") + e.what());
  }
}

}  // namespace melad
