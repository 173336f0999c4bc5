#include <doctest.h>

#include "melad/tensor.hpp"

using namespace melad;

TEST_CASE("tensor layout is row-major channels-first") {
  Tensor t = Tensor::chw(2, 3, 4);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
  CHECK(t.at(1, 2, 3) == 23.0f);
  CHECK(t.at(0, 1, 0) == 4.0f);
  CHECK(t.channels() == 2);
  CHECK(t.height() == 3);
  CHECK(t.width() == 4);
  CHECK(t.batch() == 1);

  Tensor b = Tensor::nchw(2, 2, 3, 4);
  b.at(1, 0, 0, 0) = 7.0f;
  CHECK(b[24] == 7.0f);
  CHECK(b.image(1).size() == 24);
  CHECK(b.image(1)[0] == 7.0f);
}

TEST_CASE("tensor accessors check bounds and shapes") {
  Tensor t = Tensor::chw(1, 2, 2);
  CHECK_THROWS_AS(t.at(0, 2, 0), std::out_of_range);
  CHECK_THROWS_AS(t.at(4), std::out_of_range);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
  CHECK_THROWS_AS(t.reshaped({3}), ShapeError);
  CHECK(t.reshaped({4}).dims() == std::vector<std::size_t>{4});
  CHECK(checked_volume({2, 3, 4}) == 24);
  CHECK(shape_string({3, 150, 150}) == "(3x150x150)");
}

TEST_CASE("fill and equality") {
  Tensor a({2, 2}, 1.5f), b({2, 2});
  CHECK(a != b);
  b.fill(1.5f);
  CHECK(a == b);
  CHECK(a != Tensor({4}, 1.5f));
}
