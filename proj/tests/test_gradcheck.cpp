#include <doctest.h>

#include "gradcheck.hpp"

using namespace melad;

TEST_CASE("conv backward matches finite differences") {
  std::uint64_t seed = 1;
  for (const auto& s : test::conv_grad_shapes()) {
    CAPTURE(s.l);
    CAPTURE(s.k);
    CHECK(test::conv_grad_error(s, seed) <= test::kGradTol);
    CHECK(test::conv_grad_error(s, seed, ExecMode::fast) <= test::kGradTol);
    CHECK(test::conv_grad_error(s, seed, ExecMode::deterministic, true) <= test::kGradTol);
    seed += 4;
  }
}

TEST_CASE("train-mode batchnorm backward matches finite differences") {
  for (std::uint64_t seed : {21, 23, 25}) CHECK(test::batchnorm_grad_error(seed) <= test::kGradTol);
}

TEST_CASE("relu backward matches finite differences away from the kink") {
  CHECK(test::relu_grad_error(31) <= test::kGradTol);
  const Tensor x = test::random_tensor({2, 3, 5}, 33);
  const Tensor g = test::random_tensor({2, 3, 5}, 34);
  Tensor inplace = g;
  relu_backward_inplace(x, inplace);
  CHECK(inplace == relu_backward(x, g));
}

TEST_CASE("global average pool backward matches finite differences") {
  CHECK(test::pool_grad_error(41) <= test::kGradTol);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  CHECK(test::softmax_ce_grad_error(51) <= test::kGradTol);
}
