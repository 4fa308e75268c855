#include <doctest.h>

#include <cmath>
#include <limits>

#include "molgen/tensor.hpp"

using namespace molgen;

TEST_CASE("construction and shape queries") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.dim(1) == 3);
  for (double v : t.data) CHECK(v == 0.0);

  const Tensor f = Tensor::full({2, 2}, 1.5);
  for (double v : f.data) CHECK(v == 1.5);

  CHECK(Tensor({0, 5}).numel() == 0);
  CHECK_THROWS_AS(Tensor({2, -1}), std::invalid_argument);
}

TEST_CASE("randn is seeded and scaled") {
  Rng a(3), b(3);
  const Tensor x = Tensor::randn({100}, a);
  const Tensor y = Tensor::randn({100}, b);
  CHECK(x.data == y.data);
  Rng c(3);
  const Tensor z = Tensor::randn({100}, c, 2.0);
  for (size_t i = 0; i < 100; ++i)
    CHECK(z.data[i] == doctest::Approx(2.0 * x.data[i]));
}

TEST_CASE("reshape keeps data and validates element count") {
  Tensor t({2, 3});
  for (size_t i = 0; i < 6; ++i) t.data[i] = static_cast<double>(i);
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.rank() == 2);
  CHECK(r.data == t.data);
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
}

TEST_CASE("finite checks identify bad values and name the site") {
  Tensor t({3});
  CHECK(t.all_finite());
  CHECK_NOTHROW(t.require_finite("stage"));
  t.data[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_WITH_AS(t.require_finite("stage"),
                       "stage: non-finite value encountered",
                       std::runtime_error);
  t.data[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("axpy, dot, mse and its gradient") {
  Tensor x({3}), y({3});
  x.data = {1.0, 2.0, 3.0};
  y.data = {10.0, 20.0, 30.0};
  axpy(0.5, x, y);
  CHECK(y.data[0] == doctest::Approx(10.5));
  CHECK(y.data[2] == doctest::Approx(31.5));

  Tensor a({2}), b({2});
  a.data = {1.0, -2.0};
  b.data = {3.0, 1.0};
  CHECK(dot(a, b) == doctest::Approx(1.0));
  // mse = ((1-3)^2 + (-2-1)^2)/2 = 6.5
  CHECK(mse(a, b) == doctest::Approx(6.5));
  const Tensor g = mse_grad(a, b);
  CHECK(g.data[0] == doctest::Approx(2.0 * (1.0 - 3.0) / 2.0));
  CHECK(g.data[1] == doctest::Approx(2.0 * (-2.0 - 1.0) / 2.0));
}
