#include "melad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "melad/image.hpp"

namespace melad {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- rng

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (std::uint64_t p : parts) {
    h ^= p + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    h += 0x9E3779B97F4A7C15ull;
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
    h ^= h >> 31;
  }
  return h;
}

// ------------------------------------------------------------- config

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("train config: " + what);
}

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

AugmentConfig AugmentConfig::none() {
  AugmentConfig a;
  a.rotation_prob = a.zoom_prob = a.crop_prob = a.hflip_prob = a.vflip_prob = 0.0;
  return a;
}

void AugmentConfig::validate() const {
  require(probability(rotation_prob) && probability(zoom_prob) && probability(crop_prob) &&
              probability(hflip_prob) && probability(vflip_prob),
          "augmentation probabilities must lie in [0, 1]");
  require(rotation_degrees >= 0.0 && rotation_degrees <= 180.0, "rotation range must be in [0, 180]");
  require(zoom_min > 0.0 && zoom_min <= zoom_max, "zoom range must satisfy 0 < min <= max");
  require(crop_fraction > 0.0 && crop_fraction <= 1.0, "crop fraction must be in (0, 1]");
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(epochs >= 1, "epochs must be at least 1");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "betas must lie in (0, 1)");
  require(eps > 0.0, "eps must be positive");
  augment.validate();
}

std::string train_config_to_json(const TrainConfig& c, int indent) {
  const auto& a = c.augment;
  json j{
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"eps", c.eps},
      {"seed", c.seed},
      {"balance", c.balance},
      {"image_size", c.image_size},
      {"mode", c.mode == ExecMode::deterministic ? "deterministic" : "fast"},
      {"augment",
       {{"rotation_degrees", a.rotation_degrees},
        {"rotation_prob", a.rotation_prob},
        {"zoom_min", a.zoom_min},
        {"zoom_max", a.zoom_max},
        {"zoom_prob", a.zoom_prob},
        {"crop_fraction", a.crop_fraction},
        {"crop_prob", a.crop_prob},
        {"hflip_prob", a.hflip_prob},
        {"vflip_prob", a.vflip_prob}}},
  };
  return j.dump(indent);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  require(j.is_object(), "expected a JSON object");
  TrainConfig c;
  auto& a = c.augment;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "eps") c.eps = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "balance") c.balance = v.get<bool>();
      else if (key == "image_size") c.image_size = v.get<std::size_t>();
      else if (key == "mode") {
        const auto m = v.get<std::string>();
        require(m == "deterministic" || m == "fast", "mode must be deterministic or fast");
        c.mode = m == "fast" ? ExecMode::fast : ExecMode::deterministic;
      } else if (key == "augment") {
        require(v.is_object(), "augment must be an object");
        for (const auto& [k, x] : v.items()) {
          if (k == "rotation_degrees") a.rotation_degrees = x.get<double>();
          else if (k == "rotation_prob") a.rotation_prob = x.get<double>();
          else if (k == "zoom_min") a.zoom_min = x.get<double>();
          else if (k == "zoom_max") a.zoom_max = x.get<double>();
          else if (k == "zoom_prob") a.zoom_prob = x.get<double>();
          else if (k == "crop_fraction") a.crop_fraction = x.get<double>();
          else if (k == "crop_prob") a.crop_prob = x.get<double>();
          else if (k == "hflip_prob") a.hflip_prob = x.get<double>();
          else if (k == "vflip_prob") a.vflip_prob = x.get<double>();
          else require(false, "unknown augment key \"" + k + "\"");
        }
      } else {
        require(false, "unknown key \"" + key + "\"");
      }
    }
  } catch (const json::type_error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open train config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str());
}

// --------------------------------------------------------------- adam

void adam_step(const std::vector<std::span<float>>& params,
               const std::vector<std::span<const float>>& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameter tensors but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty() && state.t == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0f);
      state.v.emplace_back(p.size(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size()) {
      throw ShapeError("adam_step: tensor " + std::to_string(i) + " size mismatch");
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const float lr = static_cast<float>(cfg.learning_rate);
  const float eps = static_cast<float>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].data();
    const float* g = grads[i].data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    const std::size_t n = params[i].size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      const float mhat = m[k] * c1;
      const float vhat = v[k] * c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ------------------------------------------------------- augmentation

Tensor hflip(const Tensor& img) {
  if (img.rank() != 3) throw ShapeError("hflip expects (C,H,W)");
  Tensor out(img.dims());
  const std::size_t c = img.channels(), h = img.height(), w = img.width();
  for (std::size_t i = 0; i < c * h; ++i)
    for (std::size_t x = 0; x < w; ++x) out[i * w + x] = img[i * w + (w - 1 - x)];
  return out;
}

Tensor vflip(const Tensor& img) {
  if (img.rank() != 3) throw ShapeError("vflip expects (C,H,W)");
  Tensor out(img.dims());
  const std::size_t c = img.channels(), h = img.height(), w = img.width();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(img.raw() + (ch * h + h - 1 - y) * w, w, out.raw() + (ch * h + y) * w);
  return out;
}

namespace {

// Mirror a continuous pixel-center coordinate into [0, n - 1]
// (edge pixels repeated: ... c b a | a b c ... ).
double reflect(double s, std::size_t n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * static_cast<double>(n);
  double t = std::fmod(s + 0.5, period);
  if (t < 0.0) t += period;
  if (t >= static_cast<double>(n)) t = period - t;
  return std::clamp(t - 0.5, 0.0, static_cast<double>(n - 1));
}

// dst(y, x) = src(c + A (p - c)) with p = (x, y), bilinear, reflect fill.
Tensor warp(const Tensor& img, double a00, double a01, double a10, double a11) {
  const std::size_t ch = img.channels(), h = img.height(), w = img.width();
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Tensor out(img.dims());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = reflect(cx + a00 * dx + a01 * dy, w);
      const double sy = reflect(cy + a10 * dx + a11 * dy, h);
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const float fx = static_cast<float>(sx - static_cast<double>(x0));
      const float fy = static_cast<float>(sy - static_cast<double>(y0));
      for (std::size_t c = 0; c < ch; ++c) {
        const float* s = img.raw() + c * h * w;
        const float top = s[y0 * w + x0] + fx * (s[y0 * w + x1] - s[y0 * w + x0]);
        const float bot = s[y1 * w + x0] + fx * (s[y1 * w + x1] - s[y1 * w + x0]);
        out[(c * h + y) * w + x] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

}  // namespace

Tensor augment(const Tensor& img, Rng& rng, const AugmentConfig& cfg) {
  if (img.rank() != 3) throw ShapeError("augment expects (C,H,W), got " + shape_string(img.dims()));
  const std::size_t h = img.height(), w = img.width();
  if (h <= 1 && w <= 1) return img;

  // Draws happen in a fixed order whether or not a transform fires, so one
  // transform's probability does not shift the others' parameters.
  const bool rotate = rng.bernoulli(cfg.rotation_prob);
  const double angle = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees);
  const bool zoom = rng.bernoulli(cfg.zoom_prob);
  const double factor = rng.uniform(cfg.zoom_min, cfg.zoom_max);
  const bool crop = rng.bernoulli(cfg.crop_prob);
  const double crop_u = rng.uniform(), crop_v = rng.uniform();
  const bool flip_h = rng.bernoulli(cfg.hflip_prob);
  const bool flip_v = rng.bernoulli(cfg.vflip_prob);

  Tensor out = img;
  if (rotate || zoom) {
    const double th = rotate ? angle * std::numbers::pi / 180.0 : 0.0;
    const double s = zoom ? 1.0 / factor : 1.0;
    const double c = std::cos(th), n = std::sin(th);
    // Inverse map: rotate by -theta, then undo the zoom.
    out = warp(out, s * c, s * n, -s * n, s * c);
  }
  if (crop) {
    const auto ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.crop_fraction * static_cast<double>(h))));
    const auto cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.crop_fraction * static_cast<double>(w))));
    const auto y0 = static_cast<std::size_t>(crop_u * static_cast<double>(h - ch + 1));
    const auto x0 = static_cast<std::size_t>(crop_v * static_cast<double>(w - cw + 1));
    Tensor window = Tensor::chw(out.channels(), ch, cw);
    for (std::size_t c = 0; c < out.channels(); ++c)
      for (std::size_t y = 0; y < ch; ++y)
        std::copy_n(out.raw() + (c * h + y0 + y) * w + x0, cw, window.raw() + (c * ch + y) * cw);
    out = resize_bilinear(window, h, w);
  }
  if (flip_h) out = hflip(out);
  if (flip_v) out = vflip(out);
  return out;
}

// ---------------------------------------------------------- balancing

DatasetManifest balance_50_50(const DatasetManifest& manifest, Rng& rng) {
  const auto counts = manifest.counts();
  if (counts.benign == 0 || counts.malignant == 0) {
    throw DataError("cannot balance: " + std::string(counts.benign == 0 ? "benign" : "malignant") +
                    " class has no samples");
  }
  if (counts.benign == counts.malignant) return manifest;

  const Label minority = counts.benign < counts.malignant ? Label::benign : Label::malignant;
  const std::size_t have = std::min(counts.benign, counts.malignant);
  const std::size_t want = std::max(counts.benign, counts.malignant);

  std::vector<std::size_t> minority_idx;
  for (std::size_t i = 0; i < manifest.size(); ++i)
    if (manifest.records()[i].label == minority) minority_idx.push_back(i);

  // Each minority record appears want / have times, and a random subset of
  // want % have records once more.
  std::vector<std::size_t> copies(manifest.size(), 0);
  for (std::size_t i : minority_idx) copies[i] = want / have - 1;
  std::vector<std::size_t> pick = minority_idx;
  rng.shuffle(pick);
  for (std::size_t k = 0; k < want % have; ++k) copies[pick[k]] += 1;

  std::set<std::uint64_t> used;
  auto fresh_seed = [&] {
    std::uint64_t s;
    do {
      s = rng.next();
    } while (!used.insert(s).second);
    return s;
  };

  DatasetManifest out;
  std::vector<SampleRecord> extra;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    SampleRecord r = manifest.records()[i];
    if (r.label == minority) {
      for (std::size_t k = 0; k < copies[i]; ++k) {
        SampleRecord dup = r;
        dup.augment_seed = fresh_seed();
        extra.push_back(std::move(dup));
      }
      r.augment_seed = fresh_seed();
    }
    out.add(std::move(r));
  }
  for (auto& r : extra) out.add(std::move(r));
  out.set_provenance(manifest.provenance());
  return out;
}

// ----------------------------------------------------------- training

std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,loss,accuracy\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.loss, e.accuracy);
    out += buf;
  }
  return out;
}

WeightBundle initial_weights(const ArchitectureConfig& arch, std::uint64_t seed) {
  WeightBundle b = zero_weights(arch);
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& spec = arch.layers[i];
    if (spec.kind != LayerKind::conv) continue;
    Tensor& k = b.get("layers." + std::to_string(i) + ".kernel");
    const double fan_in = static_cast<double>(spec.in_ch * spec.kernel_size * spec.kernel_size);
    const double bound = std::sqrt(6.0 / fan_in);
    Rng rng(mix_seed({seed, 0x1417, i}));
    for (auto& v : k.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return b;
}

namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

}  // namespace

Trainer::Trainer(const WeightBundle& init, const TrainConfig& cfg) : net_(init), cfg_(cfg) {
  cfg_.validate();
}

Trainer::StepResult Trainer::step(const Tensor& batch, const std::vector<Label>& labels) {
  if (batch.rank() != 4 || batch.dim(0) != labels.size()) {
    throw ShapeError("training batch " + shape_string(batch.dims()) + " does not match " +
                     std::to_string(labels.size()) + " labels");
  }
  auto& layers = net_.layers();
  const std::size_t n = labels.size();

  struct Saved {
    Tensor input;
    BatchNormCache cache;
    std::vector<std::size_t> dims;
  };
  std::vector<Saved> saved(layers.size());
  std::size_t first_conv = layers.size();

  Tensor x = batch;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& s = saved[i];
    std::visit(overloaded{
                   [&](ConvLayer& c) {
                     first_conv = std::min(first_conv, i);
                     s.input = std::move(x);
                     x = conv2d_dilated(s.input, c.params);
                   },
                   [&](NormLayer& l) { x = batch_norm(x, l.params, NormMode::train, &s.cache); },
                   [&](ReluLayer&) {
                     relu_inplace(x);
                     // A following conv keeps its input, which is this output.
                     const bool shared = i + 1 < layers.size() &&
                                         std::holds_alternative<ConvLayer>(layers[i + 1]);
                     if (!shared) s.input = x;
                   },
                   [&](PoolLayer&) {
                     s.dims = x.dims();
                     x = global_avg_pool(x);
                   },
                   [&](SoftmaxLayer&) {},
               },
               layers[i]);
  }

  StepResult res;
  Tensor g({n, kNumClasses});
  const float inv_n = 1.0f / static_cast<float>(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::array<float, 2> z{x[2 * b], x[2 * b + 1]};
    const auto p = softmax(z);
    std::array<float, 2> t{0.0f, 0.0f};
    t[static_cast<std::size_t>(labels[b])] = 1.0f;
    res.loss_sum += categorical_cross_entropy(p, t);
    if (make_prediction(z).label == labels[b]) ++res.correct;
    for (std::size_t k = 0; k < 2; ++k) g[2 * b + k] = (p[k] - t[k]) * inv_n;
  }

  std::vector<std::span<float>> params;
  std::vector<std::vector<float>> grads;
  for (std::size_t i = layers.size(); i-- > 0;) {
    auto& s = saved[i];
    std::visit(overloaded{
                   [&](ConvLayer& c) {
                     auto cg = conv2d_dilated_backward(s.input, c.params, g, cfg_.mode,
                                                       i != first_conv);
                     if (c.has_bias) {
                       params.push_back(c.params.bias);
                       grads.push_back(std::move(cg.bias));
                     }
                     params.push_back(c.params.kernel.data());
                     grads.emplace_back(cg.kernel.data().begin(), cg.kernel.data().end());
                     g = std::move(cg.input);
                   },
                   [&](NormLayer& l) {
                     auto bg = batch_norm_backward(s.cache, l.params, g);
                     params.push_back(l.params.beta);
                     grads.push_back(std::move(bg.beta));
                     params.push_back(l.params.gamma);
                     grads.push_back(std::move(bg.gamma));
                     g = std::move(bg.input);
                   },
                   [&](ReluLayer&) {
                     const Tensor& out = s.input.empty() ? saved[i + 1].input : s.input;
                     relu_backward_inplace(out, g);
                   },
                   [&](PoolLayer&) { g = global_avg_pool_backward(s.dims, g); },
                   [&](SoftmaxLayer&) {},
               },
               layers[i]);
    if (i + 1 < layers.size()) saved[i + 1] = Saved{};
  }
  std::vector<std::span<const float>> gspans(grads.begin(), grads.end());
  adam_step(params, gspans, adam_, cfg_);
  return res;
}

namespace {

std::vector<Tensor> load_images(const std::vector<std::string>& paths, std::size_t size) {
  std::vector<Tensor> images(paths.size());
  std::vector<std::exception_ptr> errors(paths.size());
  const auto n = static_cast<std::ptrdiff_t>(paths.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      images[i] = preprocess(fs::path(paths[i]), size, size);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(paths[i] + ": " + e.what());
    }
  }
  return images;
}

}  // namespace

TrainResult train(const ArchitectureConfig& arch_in, const DatasetManifest& manifest,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
#ifdef __GLIBC__
  // Every step allocates and frees the same large activation buffers; keep
  // them in the heap instead of returning them to the OS each time, which
  // costs a page fault per 4 KiB on the next step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  ArchitectureConfig arch = arch_in;
  arch.resolve();
  if (manifest.empty()) throw DataError("training manifest is empty");

  Rng balance_rng(mix_seed({cfg.seed, 0xBA1}));
  const DatasetManifest data = cfg.balance ? balance_50_50(manifest, balance_rng) : manifest;
  const std::size_t size = cfg.image_size ? cfg.image_size : arch.input.height;

  std::map<std::string, std::size_t> slot;
  std::vector<std::string> paths;
  std::vector<std::size_t> image_of;
  for (const auto& r : data.records()) {
    auto [it, fresh] = slot.emplace(r.image_path, paths.size());
    if (fresh) paths.push_back(r.image_path);
    image_of.push_back(it->second);
  }
  const std::vector<Tensor> images = load_images(paths, size);

  Trainer trainer(initial_weights(arch, cfg.seed), cfg);
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed({cfg.seed, 0x5EED, epoch}));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      Tensor batch = Tensor::nchw(n, 3, size, size);
      std::vector<Label> labels(n);
      const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t j = 0; j < sn; ++j) {
        const std::size_t idx = order[start + j];
        const auto& rec = data.records()[idx];
        Rng rng(mix_seed({cfg.seed, 0xA11, epoch, idx, rec.augment_seed.value_or(0)}));
        const Tensor img = augment(images[image_of[idx]], rng, cfg.augment);
        std::copy(img.data().begin(), img.data().end(), batch.image(j).begin());
        labels[j] = rec.label;
      }
      const auto step = trainer.step(batch, labels);
      loss_sum += step.loss_sum;
      correct += step.correct;
    }
    EpochStats st{epoch, loss_sum / static_cast<double>(data.size()),
                  static_cast<double>(correct) / static_cast<double>(data.size())};
    result.history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  result.weights = trainer.weights();
  return result;
}

// ---------------------------------------------------------- synthetic

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

RgbImage synthetic_image(Rng& rng, bool malignant, std::size_t size) {
  const double n = static_cast<double>(size);
  RgbImage img{size, size, std::vector<std::uint8_t>(size * size * 3)};

  double skin[3] = {195, 150, 130};
  for (double& s : skin) s += rng.uniform(-20, 20);
  const double shade_f = rng.uniform(0.5, 1.5) * 2 * std::numbers::pi / n;
  const double shade_p = rng.uniform(0, 2 * std::numbers::pi);

  const double cx = n * rng.uniform(0.35, 0.65), cy = n * rng.uniform(0.35, 0.65);
  const double rx = n * rng.uniform(0.18, 0.32), ry = n * rng.uniform(0.18, 0.32);
  const double tilt = rng.uniform(0, std::numbers::pi);

  double lesion[3];
  if (malignant) {
    const double base[3] = {105, 80, 100};
    for (int c = 0; c < 3; ++c) lesion[c] = base[c] + rng.uniform(-15, 15);
  } else {
    const double base[3] = {145, 98, 72};
    for (int c = 0; c < 3; ++c) lesion[c] = base[c] + rng.uniform(-15, 15);
  }
  // Smooth blotches inside benign lesions.
  struct Blob {
    double x, y, r, a;
  } blobs[3];
  for (auto& b : blobs) {
    b = {cx + rng.uniform(-rx, rx), cy + rng.uniform(-ry, ry), n * rng.uniform(0.08, 0.16),
         rng.uniform(-25, 25)};
  }
  const double ct = std::cos(tilt), st = std::sin(tilt);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double u = ((px - cx) * ct + (py - cy) * st) / rx;
      const double v = (-(px - cx) * st + (py - cy) * ct) / ry;
      const double r = std::sqrt(u * u + v * v);
      double edge = 1.0 - r;
      if (malignant) edge += 0.15 * std::sin(7.0 * std::atan2(v, u) + tilt);
      const double mask = 1.0 / (1.0 + std::exp(-12.0 * edge));
      const double shade = 10.0 * std::sin(shade_f * (px + py) + shade_p);

      double col[3];
      for (int c = 0; c < 3; ++c) col[c] = lesion[c];
      if (malignant) {
        const double roll = rng.uniform();
        if (roll < 0.25) {
          const double dark[3] = {55, 55, 90};
          for (int c = 0; c < 3; ++c) col[c] = dark[c];
        } else if (roll < 0.35) {
          const double pale[3] = {200, 190, 205};
          for (int c = 0; c < 3; ++c) col[c] = pale[c];
        }
      } else {
        double field = 0.0;
        for (const auto& b : blobs) {
          const double d2 = ((px - b.x) * (px - b.x) + (py - b.y) * (py - b.y)) / (b.r * b.r);
          field += b.a * std::exp(-d2);
        }
        for (double& c : col) c += field;
      }
      for (int c = 0; c < 3; ++c) {
        const double value = mask * col[c] + (1.0 - mask) * (skin[c] + shade) + rng.uniform(-4, 4);
        img.at(y, x, c) = to_u8(value);
      }
    }
  }
  return img;
}

}  // namespace

DatasetManifest synthetic_dataset(std::uint64_t seed, std::size_t n_per_class, std::size_t size,
                                  const fs::path& out_dir) {
  if (n_per_class < 1) throw std::invalid_argument("synthetic_dataset needs n_per_class >= 1");
  if (size < 1) throw std::invalid_argument("synthetic_dataset needs size >= 1");
  std::error_code ec;
  for (const char* sub : {"benign", "malignant"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw DataError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  DatasetManifest m;
  m.set_provenance({"synthetic"});
  std::vector<SampleRecord> records;
  for (const Label label : {Label::benign, Label::malignant}) {
    const std::string name = to_string(label);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      char file[64];
      std::snprintf(file, sizeof file, "%s_%04zu.png", name.c_str(), i);
      records.push_back({(out_dir / name / file).string(), label, "synthetic", std::nullopt});
    }
  }
  const auto total = static_cast<std::ptrdiff_t>(records.size());
  std::vector<std::exception_ptr> errors(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    try {
      const auto& r = records[i];
      const bool malignant = r.label == Label::malignant;
      Rng rng(mix_seed({seed, malignant ? 1u : 0u, static_cast<std::uint64_t>(i)}));
      write_png(synthetic_image(rng, malignant, size), r.image_path);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (auto& r : records) m.add(std::move(r));
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace melad
