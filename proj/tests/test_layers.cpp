#include <doctest.h>

#include <cmath>
#include <numbers>

#include "melad/conv.hpp"
#include "melad/layers.hpp"
#include "support.hpp"

using namespace melad;

TEST_CASE("conv worked examples") {
  const Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  ConvParams p;
  p.kernel = Tensor({1, 1, 3, 3}, 1.0f);
  p.bias = {0.0f};
  const Tensor y = conv2d_dilated(x, p);
  CHECK(y.at(0, 1, 1) == 45.0f);
  CHECK(y.at(0, 0, 0) == 12.0f);

  SUBCASE("impulse response reproduces the flipped kernel, spread by the dilation") {
    for (int l : {1, 2}) {
      const std::size_t n = 7, mid = 3;
      Tensor delta = Tensor::chw(1, n, n);
      delta.at(0, mid, mid) = 1.0f;
      ConvParams q;
      q.kernel = test::random_tensor({1, 1, 3, 3}, 9);
      q.bias = {0.0f};
      q.dilation = l;
      const Tensor r = conv2d_dilated(delta, q);
      double off_support = 0.0;
      for (std::size_t yy = 0; yy < n; ++yy)
        for (std::size_t xx = 0; xx < n; ++xx) {
          const long dy = long(yy) - long(mid), dx = long(xx) - long(mid);
          if (dy % l == 0 && dx % l == 0 && std::abs(dy) <= l && std::abs(dx) <= l) {
            const std::size_t i = std::size_t(1 - dy / l), j = std::size_t(1 - dx / l);
            CHECK(r.at(0, yy, xx) == q.kernel.at(0, 0, i, j));
          } else {
            off_support = std::max(off_support, double(std::abs(r.at(0, yy, xx))));
          }
        }
      CHECK(off_support == 0.0);
    }
  }
}

TEST_CASE("conv backward examples") {
  const Tensor x = test::random_tensor({2, 5, 6}, 4);
  ConvParams p;
  p.kernel = test::random_tensor({3, 2, 3, 3}, 5);
  p.bias = {0.1f, 0.2f, 0.3f};
  p.dilation = 2;
  const ConvGrads z = conv2d_dilated_backward(x, p, Tensor::chw(3, 5, 6));
  for (float v : z.input.data()) CHECK(v == 0.0f);
  for (float v : z.kernel.data()) CHECK(v == 0.0f);
  for (float v : z.bias) CHECK(v == 0.0f);

  ConvParams id;
  id.kernel = Tensor({1, 1, 1, 1}, 1.0f);
  id.bias = {0.0f};
  const Tensor g = test::random_tensor({1, 4, 4}, 6);
  CHECK(conv2d_dilated_backward(test::random_tensor({1, 4, 4}, 7), id, g).input == g);
}

TEST_CASE("batchnorm examples") {
  const Tensor x = test::random_tensor({2, 3, 3}, 1);
  BatchNormParams p = BatchNormParams::identity(2);
  p.eps = 0.0f;
  CHECK(batch_norm_infer(x, p) == x);

  BatchNormParams q = BatchNormParams::identity(1);
  q.running_mean = {5.0f};
  q.beta = {0.25f};
  const Tensor shifted = batch_norm_infer(Tensor::chw(1, 2, 2, 5.0f), q);
  for (float v : shifted.data()) CHECK(v == 0.25f);

  BatchNormParams r = BatchNormParams::identity(1);
  r.running_mean = {1.0f};
  r.running_var = {4.0f};
  r.eps = 0.0f;
  r.gamma = {2.0f};
  r.beta = {1.0f};
  CHECK(batch_norm_infer(Tensor::chw(1, 1, 1, 3.0f), r)[0] == 3.0f);
}

TEST_CASE("train-mode batchnorm uses biased batch statistics and updates running stats") {
  const Tensor x = test::random_tensor({3, 2, 4, 5}, 12, -2.0, 3.0);
  BatchNormParams p = BatchNormParams::identity(2);
  p.gamma = {1.5f, -0.5f};
  p.beta = {0.2f, 0.1f};
  p.eps = 1e-3f;
  p.momentum = 0.9f;
  BatchNormCache cache;
  const Tensor y = batch_norm(x, p, NormMode::train, &cache);
  const auto want = test::batchnorm_oracle(test::to_double(x), 3, 2, 20, {1.5, -0.5}, {0.2, 0.1}, 1e-3);
  CHECK(test::max_abs_diff(y, want) <= 1e-5);

  for (std::size_t c = 0; c < 2; ++c) {
    double mu = 0.0, var = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t i = 0; i < 20; ++i) mu += x.image(n)[c * 20 + i];
    mu /= 60.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t i = 0; i < 20; ++i) var += std::pow(x.image(n)[c * 20 + i] - mu, 2);
    var /= 60.0;
    CHECK(p.running_mean[c] == doctest::Approx(0.1 * mu).epsilon(1e-5));
    CHECK(p.running_var[c] == doctest::Approx(0.9 + 0.1 * var).epsilon(1e-5));
  }

  BatchNormParams frozen = BatchNormParams::identity(2);
  (void)batch_norm(x, frozen, NormMode::infer);
  CHECK(frozen.running_mean == std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("batchnorm rejects mismatched parameters") {
  BatchNormParams p = BatchNormParams::identity(3);
  CHECK_THROWS_AS(batch_norm_infer(Tensor::chw(2, 2, 2), p), ShapeError);
  p.eps = -1.0f;
  CHECK_THROWS(batch_norm_infer(Tensor::chw(3, 2, 2), p));
}

TEST_CASE("activation, pooling and softmax examples") {
  const Tensor r = relu(Tensor({2}, {-2.0f, 3.0f}));
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 3.0f);

  const Tensor pooled = global_avg_pool(Tensor({1, 2, 2}, {1, 2, 3, 4}));
  CHECK(pooled.dims() == std::vector<std::size_t>{1});
  CHECK(pooled[0] == 2.5f);
  CHECK(global_avg_pool(Tensor::nchw(3, 4, 2, 2)).dims() == std::vector<std::size_t>{3, 4});

  const float z[] = {0.0f, 0.0f}, big[] = {1000.0f, 1000.0f};
  CHECK(softmax(z) == std::vector<float>{0.5f, 0.5f});
  CHECK(softmax(big) == std::vector<float>{0.5f, 0.5f});
  const float l3[] = {0.0f, static_cast<float>(std::log(3.0))};
  const auto s = softmax(l3);
  CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-6));
  CHECK_THROWS_AS(softmax(std::span<const float>{}), std::invalid_argument);
}

TEST_CASE("cross-entropy examples") {
  const float one_hot[] = {1.0f, 0.0f};
  CHECK(categorical_cross_entropy(one_hot, one_hot) <= 1e-11);
  const float half[] = {0.5f, 0.5f};
  CHECK(categorical_cross_entropy(half, one_hot) == doctest::Approx(std::numbers::ln2).epsilon(1e-6));
  const float l3[] = {0.0f, static_cast<float>(std::log(3.0))};
  const auto g = softmax_cross_entropy_grad(softmax(l3), one_hot);
  CHECK(g[0] == doctest::Approx(-0.75).epsilon(1e-6));
  CHECK(g[1] == doctest::Approx(0.75).epsilon(1e-6));
  const float zero[] = {0.0f, 1.0f};
  CHECK(std::isfinite(categorical_cross_entropy(zero, one_hot)));
}

TEST_CASE("softmax outputs a distribution for any logits") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<float> l(1 + rng.below(6));
    for (auto& v : l) v = static_cast<float>(rng.uniform(-80.0, 80.0));
    const auto s = softmax(l);
    double sum = 0.0;
    for (float v : s) {
      CHECK(v >= 0.0f);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}
