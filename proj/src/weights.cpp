#include "melad/weights.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace melad {

std::string to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::bad_magic:
      return "bad magic";
    case FormatErrorKind::unsupported_version:
      return "unsupported version";
    case FormatErrorKind::checksum_mismatch:
      return "checksum mismatch";
    case FormatErrorKind::truncated_stream:
      return "truncated stream";
    case FormatErrorKind::shape_mismatch:
      return "shape mismatch";
    case FormatErrorKind::malformed:
      return "malformed bundle";
  }
  return "format error";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t i = 0; i < bytes.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - i);
    crc = ::crc32(crc, bytes.data() + i, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

const Tensor& WeightBundle::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw std::out_of_range("weight bundle has no tensor \"" + name + "\"");
}

Tensor& WeightBundle::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const WeightBundle&>(*this).get(name));
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(
    const ArchitectureConfig& config) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    if (l.kind == LayerKind::conv) {
      out.push_back({p + "kernel", {l.out_ch, l.in_ch, l.kernel_size, l.kernel_size}});
      if (l.bias) out.push_back({p + "bias", {l.out_ch}});
    } else if (l.kind == LayerKind::dense) {
      out.push_back({p + "weight", {l.out_ch, l.in_ch}});
      if (l.bias) out.push_back({p + "bias", {l.out_ch}});
    } else if (l.kind == LayerKind::batchnorm) {
      for (const char* f : {"gamma", "beta", "running_mean", "running_var"})
        out.push_back({p + f, {l.channels}});
    }
  }
  return out;
}

void WeightBundle::validate() const {
  const auto expect = expected_tensors(config);
  if (expect.size() != tensors.size()) {
    throw FormatError(FormatErrorKind::shape_mismatch,
                      "config requires " + std::to_string(expect.size()) + " tensors, bundle has " +
                          std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (tensors[i].name != expect[i].first) {
      throw FormatError(FormatErrorKind::shape_mismatch,
                        "tensor " + std::to_string(i) + " is \"" + tensors[i].name +
                            "\", config requires \"" + expect[i].first + "\"");
    }
    if (tensors[i].value.dims() != expect[i].second) {
      throw FormatError(FormatErrorKind::shape_mismatch,
                        "tensor \"" + tensors[i].name + "\" has extents " +
                            shape_string(tensors[i].value.dims()) + ", config requires " +
                            shape_string(expect[i].second));
    }
  }
}

WeightBundle zero_weights(const ArchitectureConfig& config) {
  WeightBundle b;
  b.config = config;
  for (auto& [name, dims] : expected_tensors(config)) {
    const bool ones = name.ends_with(".gamma") || name.ends_with(".running_var");
    b.tensors.push_back({name, Tensor(dims, ones ? 1.0f : 0.0f)});
  }
  return b;
}

namespace {

template <class T>
T swap_bytes(T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof v);
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof v);
  return v;
}

constexpr char kMagic[4] = {'M', 'E', 'L', 'D'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    bytes(&v, sizeof v);
  }
  void f32(std::span<const float> data) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(data.data(), data.size_bytes());
    } else {
      for (float f : data) le(std::bit_cast<std::uint32_t>(f));
    }
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > b_.size() - pos_) {
      throw FormatError(FormatErrorKind::truncated_stream,
                        std::string("stream ends inside ") + what + " at byte " +
                            std::to_string(pos_));
    }
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T le(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof v, what).data(), sizeof v);
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const WeightBundle& bundle) {
  bundle.config.validate();
  bundle.validate();
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kWeightFormatVersion);
  const std::string cfg = architecture_to_json(bundle.config);
  w.le<std::uint64_t>(cfg.size());
  w.bytes(cfg.data(), cfg.size());
  for (const auto& t : bundle.tensors) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.dims()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.f32(t.value.data());
  }
  w.le<std::uint32_t>(crc32(w.buffer()));
  return std::move(w.buffer());
}

WeightBundle decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, "file does not start with \"MELD\"");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw FormatError(FormatErrorKind::unsupported_version,
                      "version " + std::to_string(version) + ", this build reads " +
                          std::to_string(kWeightFormatVersion));
  }
  const auto cfg_len = r.le<std::uint64_t>("config length");
  if (cfg_len > r.remaining()) {
    throw FormatError(FormatErrorKind::truncated_stream,
                      "config length " + std::to_string(cfg_len) + " exceeds the stream");
  }
  const auto cfg_bytes = r.take(static_cast<std::size_t>(cfg_len), "config");
  const std::string cfg_text(cfg_bytes.begin(), cfg_bytes.end());

  // Records are parsed before the checksum is verified so that a short file
  // reports truncation rather than a checksum failure. The record count
  // comes from the config, so the config must parse first.
  ArchitectureConfig config;
  std::string config_problem;
  try {
    config = architecture_from_json(cfg_text);
  } catch (const ConfigError& e) {
    config_problem = e.what();
  }

  std::vector<NamedTensor> tensors;
  if (config_problem.empty()) {
    const std::size_t count = expected_tensors(config).size();
    for (std::size_t i = 0; i < count; ++i) {
      const auto name_len = r.le<std::uint16_t>("tensor name length");
      const auto name_bytes = r.take(name_len, "tensor name");
      const auto rank = r.le<std::uint8_t>("tensor rank");
      if (rank == 0 || rank > 4) {
        throw FormatError(FormatErrorKind::malformed, "tensor rank " + std::to_string(rank));
      }
      std::vector<std::size_t> dims(rank);
      std::size_t count_floats = 1;
      for (auto& d : dims) {
        d = r.le<std::uint32_t>("tensor extents");
        if (d == 0) throw FormatError(FormatErrorKind::malformed, "zero tensor extent");
        count_floats *= d;
      }
      if (count_floats > r.remaining() / sizeof(float)) {
        throw FormatError(FormatErrorKind::truncated_stream,
                          "stream ends inside tensor data of \"" +
                              std::string(name_bytes.begin(), name_bytes.end()) + "\"");
      }
      const auto raw = r.take(count_floats * sizeof(float), "tensor data");
      std::vector<float> data(count_floats);
      std::memcpy(data.data(), raw.data(), raw.size());
      if constexpr (std::endian::native == std::endian::big) {
        for (auto& f : data) f = std::bit_cast<float>(swap_bytes(std::bit_cast<std::uint32_t>(f)));
      }
      tensors.push_back({std::string(name_bytes.begin(), name_bytes.end()),
                         Tensor(std::move(dims), std::move(data))});
    }
    if (r.remaining() < sizeof(std::uint32_t)) {
      throw FormatError(FormatErrorKind::truncated_stream, "stream ends before the checksum");
    }
    if (r.remaining() > sizeof(std::uint32_t)) {
      throw FormatError(FormatErrorKind::malformed,
                        std::to_string(r.remaining() - 4) + " unexpected bytes after the tensors");
    }
  } else if (r.remaining() < sizeof(std::uint32_t)) {
    throw FormatError(FormatErrorKind::truncated_stream, "stream ends before the checksum");
  }

  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if constexpr (std::endian::native == std::endian::big) stored = swap_bytes(stored);
  const std::uint32_t actual = crc32(bytes.first(body));
  if (stored != actual) {
    throw FormatError(FormatErrorKind::checksum_mismatch, "stored CRC-32 does not match content");
  }
  if (!config_problem.empty()) throw FormatError(FormatErrorKind::malformed, config_problem);

  WeightBundle bundle{std::move(config), std::move(tensors)};
  bundle.validate();
  return bundle;
}

void save_weights(const WeightBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = encode_weights(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write weight file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing weight file " + path.string());
}

WeightBundle load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_weights(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " +
                                    std::string(e.what()).substr(to_string(e.kind()).size() + 2));
  }
}

}  // namespace melad
