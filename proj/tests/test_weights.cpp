#include <doctest.h>

#include <fstream>

#include "melad/trainer.hpp"
#include "melad/weights.hpp"
#include "support.hpp"

using namespace melad;

namespace {

WeightBundle random_lite(std::uint64_t seed) {
  WeightBundle b = initial_weights(preset_architecture("mela-d-lite"), seed);
  for (auto& t : b.tensors)
    if (t.name.ends_with("running_var")) t.value = test::random_tensor(t.value.dims(), seed, 0.5, 2.0);
  return b;
}

FormatErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    (void)decode_weights(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return FormatErrorKind::malformed;
}

}  // namespace

TEST_CASE("byte layout of the weight format") {
  const WeightBundle b = zero_weights(preset_architecture("mela-d-lite"));
  const auto bytes = encode_weights(b);
  REQUIRE(bytes.size() > 16);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MELD");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  std::uint64_t cfg_len = 0;
  for (int i = 7; i >= 0; --i) cfg_len = (cfg_len << 8) | bytes[8 + i];
  const std::string cfg(bytes.begin() + 16, bytes.begin() + 16 + long(cfg_len));
  CHECK(architecture_from_json(cfg) == b.config);

  std::size_t floats = 0, header = 0;
  for (const auto& [name, dims] : expected_tensors(b.config)) {
    header += 2 + name.size() + 1 + 4 * dims.size();
    floats += checked_volume(dims);
  }
  CHECK(bytes.size() == 16 + cfg_len + header + 4 * floats + 4);

  std::uint32_t stored = 0;
  for (int i = 3; i >= 0; --i) stored = (stored << 8) | bytes[bytes.size() - 4 + i];
  CHECK(stored == crc32(std::span(bytes).first(bytes.size() - 4)));
  const std::string check = "123456789";
  CHECK(crc32(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), check.size())) ==
        0xCBF43926u);
}

TEST_CASE("save and load round-trip bit-identically") {
  const auto dir = test::scratch_dir("weights");
  const WeightBundle b = random_lite(3);
  save_weights(b, dir / "w.meld");
  const WeightBundle back = load_weights(dir / "w.meld");
  CHECK(back == b);
  CHECK(encode_weights(back) == encode_weights(b));
  save_weights(back, dir / "w2.meld");
  std::ifstream f1(dir / "w.meld", std::ios::binary), f2(dir / "w2.meld", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(f1), {}) ==
        std::string(std::istreambuf_iterator<char>(f2), {}));
}

TEST_CASE("corruptions map to distinct errors") {
  const auto good = encode_weights(random_lite(4));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(decode_error(bad_magic) == FormatErrorKind::bad_magic);

  auto version = good;
  version[4] = 2;
  CHECK(decode_error(version) == FormatErrorKind::unsupported_version);

  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    auto flipped = good;
    const std::size_t at = good.size() / 2 + rng.below(good.size() / 2 - 4);
    flipped[at] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    CHECK(decode_error(flipped) == FormatErrorKind::checksum_mismatch);
  }
  auto crc = good;
  crc.back() ^= 0x10;
  CHECK(decode_error(crc) == FormatErrorKind::checksum_mismatch);

  for (std::size_t keep : {std::size_t(20), good.size() / 2, good.size() - 5, good.size() - 1}) {
    CAPTURE(keep);
    CHECK(decode_error({good.begin(), good.begin() + long(keep)}) ==
          FormatErrorKind::truncated_stream);
  }
  CHECK(decode_error({good.begin(), good.begin() + 3}) == FormatErrorKind::truncated_stream);

  CHECK(to_string(FormatErrorKind::bad_magic) != to_string(FormatErrorKind::checksum_mismatch));
  CHECK(to_string(FormatErrorKind::checksum_mismatch) !=
        to_string(FormatErrorKind::truncated_stream));
  try {
    (void)decode_weights(bad_magic);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).starts_with("bad magic"));
  }
}

TEST_CASE("bundles must match their config") {
  WeightBundle b = zero_weights(preset_architecture("mela-d-lite"));
  CHECK_NOTHROW(b.validate());
  b.get("layers.0.kernel") = Tensor({32, 3, 5, 5});
  CHECK_THROWS_AS(b.validate(), FormatError);
  b = zero_weights(preset_architecture("mela-d-lite"));
  b.tensors.pop_back();
  CHECK_THROWS_AS(b.validate(), FormatError);
  CHECK_THROWS_AS(encode_weights(b), FormatError);
  CHECK_THROWS_AS(b.get("layers.99.kernel"), std::out_of_range);

  const auto dir = test::scratch_dir("weights_missing");
  CHECK_THROWS_AS(load_weights(dir / "nope.meld"), DataError);
}

TEST_CASE("zero weights are all-zero convs and identity batchnorm") {
  const WeightBundle b = zero_weights(preset_architecture("mela-d-lite"));
  for (const auto& t : b.tensors) {
    const float want = t.name.ends_with("gamma") || t.name.ends_with("running_var") ? 1.0f : 0.0f;
    for (float v : t.value.data()) CHECK(v == want);
  }
  CHECK(b.get("layers.0.kernel").dims() == std::vector<std::size_t>{32, 3, 3, 3});
  CHECK(b.get("layers.1.gamma").dims() == std::vector<std::size_t>{32});
}
