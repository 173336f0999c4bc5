#include <doctest.h>

#include "melad/conv.hpp"
#include "melad/parallel.hpp"
#include "support.hpp"

using namespace melad;

namespace {

struct Case {
  std::size_t n, c, o, h, w, k;
  int l;
};

Case random_case(Rng& rng) {
  static const int kDil[] = {1, 2, 4, 8};
  Case cs;
  cs.n = 1 + rng.below(2);
  cs.c = 1 + rng.below(4);
  cs.o = 1 + rng.below(4);
  cs.h = 1 + rng.below(12);
  cs.w = 1 + rng.below(12);
  cs.k = rng.bernoulli(0.8) ? 3 : (rng.bernoulli(0.5) ? 1 : 5);
  cs.l = kDil[rng.below(4)];
  return cs;
}

ConvParams random_params(const Case& cs, std::uint64_t seed, bool bias = true) {
  ConvParams p;
  p.kernel = test::random_tensor({cs.o, cs.c, cs.k, cs.k}, seed);
  const Tensor b = test::random_tensor({cs.o}, seed + 1);
  p.bias = bias ? std::vector<float>(b.data().begin(), b.data().end())
                : std::vector<float>(cs.o, 0.0f);
  p.dilation = cs.l;
  return p;
}

std::vector<double> oracle(const Tensor& x, const ConvParams& p) {
  return test::conv_oracle(test::to_double(x), x.batch(), x.channels(), x.height(), x.width(),
                           test::to_double(p.kernel), p.out_channels(), p.kernel_size(),
                           {p.bias.begin(), p.bias.end()}, p.dilation);
}

}  // namespace

TEST_CASE("dilated conv matches the direct-summation oracle on random cases") {
  Rng rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Case cs = random_case(rng);
    const Tensor x = test::random_tensor({cs.n, cs.c, cs.h, cs.w}, 100 + t);
    const ConvParams p = random_params(cs, 500 + t);
    const Tensor y = conv2d_dilated(x, p);
    REQUIRE(y.dims() == std::vector<std::size_t>{cs.n, cs.o, cs.h, cs.w});
    worst = std::max(worst, test::max_abs_diff(y, oracle(x, p)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("serial reference kernel agrees with the oracle too") {
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    const Case cs = random_case(rng);
    const Tensor x = test::random_tensor({cs.n, cs.c, cs.h, cs.w}, 900 + t);
    const ConvParams p = random_params(cs, 1900 + t);
    CHECK(test::max_abs_diff(reference::conv2d_dilated(x, p), oracle(x, p)) <= 1e-5);
  }
}

TEST_CASE("optimized forward is bit-identical to the serial reference") {
  Rng rng(5);
  for (int t = 0; t < 40; ++t) {
    Case cs = random_case(rng);
    cs.w += rng.below(40);  // cross the vector-tile boundary
    cs.o += rng.below(20);  // cross the channel-tile boundary
    const Tensor x = test::random_tensor({cs.n, cs.c, cs.h, cs.w}, 40 + t);
    const ConvParams p = random_params(cs, 80 + t);
    CHECK(conv2d_dilated(x, p) == reference::conv2d_dilated(x, p));
  }
}

TEST_CASE("conv examples") {
  SUBCASE("1x1 identity kernel returns the input") {
    const Tensor x = test::random_tensor({2, 5, 5}, 1);
    ConvParams p;
    p.kernel = Tensor({2, 2, 1, 1});
    p.kernel.at(0, 0, 0, 0) = 1.0f;
    p.kernel.at(1, 1, 0, 0) = 1.0f;
    p.bias = {0.0f, 0.0f};
    CHECK(conv2d_dilated(x, p) == x);
  }
  SUBCASE("all-ones 3x3 kernel on all-ones 5x5 counts in-bounds taps") {
    const Tensor x = Tensor::chw(1, 5, 5, 1.0f);
    ConvParams p;
    p.kernel = Tensor({1, 1, 3, 3}, 1.0f);
    p.bias = {0.0f};
    p.dilation = 1;
    const Tensor y = conv2d_dilated(x, p);
    CHECK(y.at(0, 2, 2) == 9.0f);
    CHECK(y.at(0, 0, 0) == 4.0f);
    CHECK(y.at(0, 0, 2) == 6.0f);
    p.dilation = 2;
    const Tensor y2 = conv2d_dilated(x, p);
    CHECK(y2.at(0, 2, 2) == 9.0f);
    CHECK(y2.at(0, 0, 0) == 4.0f);
    CHECK(y2.at(0, 1, 1) == 4.0f);
  }
  SUBCASE("dilation larger than the image only leaves the centre tap") {
    const Tensor x = test::random_tensor({1, 3, 3}, 3);
    ConvParams p;
    p.kernel = Tensor({1, 1, 3, 3}, 1.0f);
    p.bias = {0.5f};
    p.dilation = 8;
    const Tensor y = conv2d_dilated(x, p);
    for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == x[i] + 0.5f);
  }
}

TEST_CASE("conv rejects malformed parameters") {
  const Tensor x = Tensor::chw(2, 4, 4);
  ConvParams p;
  p.kernel = Tensor({1, 2, 2, 2});
  p.bias = {0.0f};
  CHECK_THROWS_AS(conv2d_dilated(x, p), ShapeError);  // even kernel
  p.kernel = Tensor({1, 3, 3, 3});
  CHECK_THROWS_AS(conv2d_dilated(x, p), ShapeError);  // channel mismatch
  p.kernel = Tensor({1, 2, 3, 3});
  p.dilation = 0;
  CHECK_THROWS_AS(conv2d_dilated(x, p), ShapeError);
  p.dilation = 1;
  p.bias = {0.0f, 0.0f};
  CHECK_THROWS_AS(conv2d_dilated(x, p), ShapeError);  // bias length
  p.bias = {0.0f};
  CHECK_THROWS_AS(conv2d_dilated(Tensor({4, 4}), p), ShapeError);
}

TEST_CASE("conv is linear in its input and preserves spatial size") {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const Case cs = random_case(rng);
    const Tensor f1 = test::random_tensor({cs.n, cs.c, cs.h, cs.w}, 10 + t);
    const Tensor f2 = test::random_tensor({cs.n, cs.c, cs.h, cs.w}, 70 + t);
    const ConvParams p = random_params(cs, 30 + t, false);
    const float a = 0.75f, b = -1.5f;
    Tensor mix(f1.dims());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * f1[i] + b * f2[i];
    const Tensor y = conv2d_dilated(mix, p);
    const Tensor y1 = conv2d_dilated(f1, p), y2 = conv2d_dilated(f2, p);
    CHECK(y.height() == cs.h);
    CHECK(y.width() == cs.w);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
      worst = std::max(worst, std::abs(double(y[i]) - (a * double(y1[i]) + b * double(y2[i]))));
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("backward matches the serial reference") {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    Case cs = random_case(rng);
    cs.w += rng.below(20);
    const Tensor x = test::random_tensor({cs.n, cs.c, cs.h, cs.w}, 300 + t);
    const ConvParams p = random_params(cs, 400 + t);
    const Tensor g = test::random_tensor({cs.n, cs.o, cs.h, cs.w}, 600 + t);
    const ConvGrads fast = conv2d_dilated_backward(x, p, g);
    const ConvGrads ref = reference::conv2d_dilated_backward(x, p, g);
    CHECK(test::max_abs_diff(fast.input, ref.input) <= 1e-5);
    CHECK(test::max_abs_diff(fast.kernel, ref.kernel) <= 1e-4);
    for (std::size_t i = 0; i < ref.bias.size(); ++i) CHECK(fast.bias[i] == doctest::Approx(ref.bias[i]).epsilon(1e-5));
  }
}

TEST_CASE("deterministic mode is independent of the thread count; fast mode stays close") {
  const Tensor x = test::random_tensor({3, 4, 17, 21}, 1);
  const Case cs{3, 4, 5, 17, 21, 3, 2};
  const ConvParams p = random_params(cs, 2);
  const Tensor g = test::random_tensor({3, 5, 17, 21}, 3);
  const int saved = num_threads();
  set_num_threads(1);
  const Tensor y1 = conv2d_dilated(x, p);
  const ConvGrads g1 = conv2d_dilated_backward(x, p, g);
  for (int t : {2, 3, 4}) {
    set_num_threads(t);
    CHECK(conv2d_dilated(x, p) == y1);
    const ConvGrads gt = conv2d_dilated_backward(x, p, g);
    CHECK(gt.input == g1.input);
    CHECK(gt.kernel == g1.kernel);
    CHECK(gt.bias == g1.bias);
    const ConvGrads gf = conv2d_dilated_backward(x, p, g, ExecMode::fast);
    CHECK(test::rel_error(test::to_double(gf.kernel), test::to_double(g1.kernel)) <= 1e-5);
  }
  set_num_threads(saved);
}
