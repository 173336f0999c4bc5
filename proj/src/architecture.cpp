#include "melad/architecture.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace melad {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<LayerKind, const char*>, 6> kKindNames{{
    {LayerKind::conv, "conv"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::relu, "relu"},
    {LayerKind::global_avg_pool, "global_avg_pool"},
    {LayerKind::softmax, "softmax"},
    {LayerKind::dense, "dense"},
}};

std::string where(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& [k, n] : kKindNames)
    if (k == kind) return n;
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (const auto& [k, n] : kKindNames)
    if (s == n) return k;
  throw ConfigError("unknown layer kind \"" + s + "\"");
}

LayerSpec LayerSpec::conv(std::size_t in, std::size_t out, std::size_t k, int dilation,
                          bool bias) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.in_ch = in;
  l.out_ch = out;
  l.kernel_size = k;
  l.dilation = dilation;
  l.bias = bias;
  return l;
}

LayerSpec LayerSpec::batchnorm(std::size_t channels) {
  LayerSpec l;
  l.kind = LayerKind::batchnorm;
  l.channels = channels;
  return l;
}

LayerSpec LayerSpec::of(LayerKind kind) {
  LayerSpec l;
  l.kind = kind;
  return l;
}

void ArchitectureConfig::resolve() {
  std::size_t last_out = input.channels;
  for (auto& l : layers) {
    if (l.kind == LayerKind::conv || l.kind == LayerKind::dense) last_out = l.out_ch;
    if (l.kind == LayerKind::batchnorm && l.channels == 0) l.channels = last_out;
  }
  validate();
}

void ArchitectureConfig::validate() const {
  if (name.empty()) throw ConfigError("architecture name is empty");
  if (input.channels == 0 || input.height == 0 || input.width == 0) {
    throw ConfigError("architecture input extents must be >= 1");
  }
  if (layers.empty()) throw ConfigError("architecture has no layers");

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::conv) {
      if (l.in_ch == 0 || l.out_ch == 0) throw ConfigError(where(i, l) + ": channels must be >= 1");
      if (l.kernel_size % 2 == 0) {
        throw ConfigError(where(i, l) + ": kernel_size must be odd, got " +
                          std::to_string(l.kernel_size));
      }
      if (l.dilation < 1) throw ConfigError(where(i, l) + ": dilation must be >= 1");
      if (l.stride < 1) throw ConfigError(where(i, l) + ": stride must be >= 1");
    }
    if (l.kind == LayerKind::dense && (l.in_ch == 0 || l.out_ch == 0)) {
      throw ConfigError(where(i, l) + ": units must be >= 1");
    }
    if (l.kind == LayerKind::batchnorm && l.channels == 0) {
      throw ConfigError(where(i, l) + ": channel count unresolved");
    }
  }
  if (reference_only) return;

  std::size_t cur = input.channels;
  std::size_t pools = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (pools > 0 && l.kind != LayerKind::softmax) {
      throw ConfigError(where(i, l) + ": only softmax may follow global_avg_pool");
    }
    switch (l.kind) {
      case LayerKind::conv:
        if (l.in_ch != cur) {
          throw ConfigError(where(i, l) + ": in_ch " + std::to_string(l.in_ch) +
                            " does not match incoming " + std::to_string(cur) + " channels");
        }
        if (l.stride != 1) throw ConfigError(where(i, l) + ": executable configs are stride 1");
        cur = l.out_ch;
        break;
      case LayerKind::batchnorm:
        if (l.channels != cur) {
          throw ConfigError(where(i, l) + ": channels " + std::to_string(l.channels) +
                            " does not match incoming " + std::to_string(cur));
        }
        break;
      case LayerKind::global_avg_pool:
        ++pools;
        if (cur != kNumClasses) {
          throw ConfigError(where(i, l) + ": pooled features must be the " +
                            std::to_string(kNumClasses) + " class logits, got " +
                            std::to_string(cur));
        }
        break;
      case LayerKind::dense:
        throw ConfigError(where(i, l) + ": dense layers are reference-only");
      case LayerKind::relu:
      case LayerKind::softmax:
        break;
    }
  }
  if (pools != 1) throw ConfigError("architecture needs exactly one global_avg_pool");
  if (layers.back().kind != LayerKind::softmax) {
    throw ConfigError("architecture must end with softmax");
  }
}

ArchitectureConfig default_mela_d(std::size_t channels) {
  if (channels < 2) throw ConfigError("mela-d width must be >= 2");
  ArchitectureConfig cfg;
  cfg.name = channels == 128 ? "mela-d"
             : channels == 32 ? "mela-d-lite"
                              : "mela-d-c" + std::to_string(channels);
  constexpr std::array<int, 7> dilations{1, 1, 1, 2, 4, 8, 1};
  std::size_t in = cfg.input.channels;
  for (int d : dilations) {
    cfg.layers.push_back(LayerSpec::conv(in, channels, 3, d));
    cfg.layers.push_back(LayerSpec::batchnorm(channels));
    cfg.layers.push_back(LayerSpec::of(LayerKind::relu));
    in = channels;
  }
  cfg.layers.push_back(LayerSpec::conv(channels, kNumClasses, 1, 1));
  cfg.layers.push_back(LayerSpec::of(LayerKind::global_avg_pool));
  cfg.layers.push_back(LayerSpec::of(LayerKind::softmax));
  cfg.validate();
  return cfg;
}

ArchitectureConfig preset_architecture(const std::string& name) {
  if (name == "mela-d") return default_mela_d(128);
  if (name == "mela-d-lite") return default_mela_d(32);
  throw ConfigError("unknown architecture preset \"" + name + "\"");
}

ParamCount count_params(const ArchitectureConfig& config) {
  ParamCount n;
  for (const auto& l : config.layers) {
    switch (l.kind) {
      case LayerKind::conv:
        n.trainable += l.kernel_size * l.kernel_size * l.in_ch * l.out_ch + (l.bias ? l.out_ch : 0);
        break;
      case LayerKind::dense:
        n.trainable += l.in_ch * l.out_ch + (l.bias ? l.out_ch : 0);
        break;
      case LayerKind::batchnorm:
        n.trainable += 2 * l.channels;
        n.non_trainable += 2 * l.channels;
        break;
      default:
        break;
    }
  }
  return n;
}

std::size_t receptive_field(const ArchitectureConfig& config) {
  if (config.reference_only) {
    throw ConfigError("receptive_field needs a stride-1 executable config");
  }
  std::size_t rf = 1;
  for (const auto& l : config.layers)
    if (l.kind == LayerKind::conv) rf += static_cast<std::size_t>(l.dilation) * (l.kernel_size - 1);
  return rf;
}

std::uint64_t count_flops(const ArchitectureConfig& config, std::size_t height, std::size_t width) {
  if (config.reference_only) throw ConfigError("count_flops needs an executable config");
  const std::uint64_t hw = static_cast<std::uint64_t>(height) * width;
  std::uint64_t flops = 0;
  std::size_t cur = config.input.channels;
  bool pooled = false;
  for (const auto& l : config.layers) {
    switch (l.kind) {
      case LayerKind::conv:
        flops += 2ull * l.kernel_size * l.kernel_size * l.in_ch * l.out_ch * hw;
        cur = l.out_ch;
        break;
      case LayerKind::batchnorm:
        flops += 2ull * cur * hw;
        break;
      case LayerKind::relu:
        flops += pooled ? cur : cur * hw;
        break;
      case LayerKind::global_avg_pool:
        flops += cur * hw;
        pooled = true;
        break;
      case LayerKind::softmax:
        flops += 3ull * cur * (pooled ? 1 : hw);
        break;
      case LayerKind::dense:
        break;
    }
  }
  return flops;
}

namespace {

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = to_string(l.kind);
  switch (l.kind) {
    case LayerKind::conv:
      j["in_ch"] = l.in_ch;
      j["out_ch"] = l.out_ch;
      j["kernel_size"] = l.kernel_size;
      j["dilation"] = l.dilation;
      j["bias"] = l.bias;
      if (l.stride != 1) j["stride"] = l.stride;
      break;
    case LayerKind::dense:
      j["in_ch"] = l.in_ch;
      j["out_ch"] = l.out_ch;
      j["bias"] = l.bias;
      break;
    case LayerKind::batchnorm:
      if (l.channels) j["channels"] = l.channels;
      break;
    default:
      break;
  }
  return j;
}

template <class T>
T field(const json& j, const char* key, std::size_t idx) {
  if (!j.contains(key)) {
    throw ConfigError("layer " + std::to_string(idx) + " is missing \"" + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("layer " + std::to_string(idx) + " field \"" + key + "\": " + e.what());
  }
}

LayerSpec layer_from_json(const json& j, std::size_t idx) {
  LayerSpec l;
  l.kind = layer_kind_from_string(field<std::string>(j, "kind", idx));
  switch (l.kind) {
    case LayerKind::conv:
      l.in_ch = field<std::size_t>(j, "in_ch", idx);
      l.out_ch = field<std::size_t>(j, "out_ch", idx);
      l.kernel_size = field<std::size_t>(j, "kernel_size", idx);
      l.dilation = j.contains("dilation") ? field<int>(j, "dilation", idx) : 1;
      l.stride = j.contains("stride") ? field<int>(j, "stride", idx) : 1;
      l.bias = j.contains("bias") ? field<bool>(j, "bias", idx) : true;
      break;
    case LayerKind::dense:
      l.in_ch = field<std::size_t>(j, "in_ch", idx);
      l.out_ch = field<std::size_t>(j, "out_ch", idx);
      l.bias = j.contains("bias") ? field<bool>(j, "bias", idx) : true;
      break;
    case LayerKind::batchnorm:
      l.channels = j.contains("channels") ? field<std::size_t>(j, "channels", idx) : 0;
      break;
    default:
      break;
  }
  return l;
}

}  // namespace

std::string architecture_to_json(const ArchitectureConfig& config, int indent) {
  json j;
  j["name"] = config.name;
  j["input"] = {{"channels", config.input.channels},
                {"height", config.input.height},
                {"width", config.input.width}};
  if (config.reference_only) j["reference_only"] = true;
  json layers = json::array();
  for (const auto& l : config.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  return j.dump(indent);
}

ArchitectureConfig architecture_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("architecture JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array()) {
    throw ConfigError("architecture JSON needs an object with a \"layers\" array");
  }
  ArchitectureConfig cfg;
  try {
    cfg.name = j.value("name", std::string{});
    if (j.contains("input")) {
      const auto& in = j["input"];
      cfg.input.channels = in.value("channels", std::size_t{3});
      cfg.input.height = in.value("height", std::size_t{150});
      cfg.input.width = in.value("width", std::size_t{150});
    }
    cfg.reference_only = j.value("reference_only", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture JSON: ") + e.what());
  }
  const auto& layers = j["layers"];
  for (std::size_t i = 0; i < layers.size(); ++i) cfg.layers.push_back(layer_from_json(layers[i], i));
  cfg.resolve();
  return cfg;
}

ArchitectureConfig load_architecture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open architecture file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return architecture_from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_architecture(const ArchitectureConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write architecture file " + path.string());
  out << architecture_to_json(config, 2) << '\n';
}

}  // namespace melad
