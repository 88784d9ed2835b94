#include <doctest.h>

#include "egc/error.hpp"
#include "egc/tensor.hpp"
#include "oracles.hpp"

using namespace egc;

TEST_CASE("create fills every element") {
  const Tensor z = create(Shape{2, 3}, 0.0f);
  CHECK(z.shape() == Shape{2, 3});
  REQUIRE(z.size() == 6);
  for (float v : z.data()) CHECK(v == 0.0f);

  const Tensor one = create(Shape{1, 1, 1, 1}, 5.0f);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 5.0f);

  CHECK(sum(create(Shape{2, 2}, 1.0f)) == 4.0f);
}

TEST_CASE("create rejects non-positive extents") {
  CHECK_THROWS_AS(create(Shape{2, 0}, 1.0f), ShapeError);
  CHECK_THROWS_AS(create(Shape{-1}, 1.0f), ShapeError);
  CHECK_THROWS_AS(create(Shape{}, 1.0f), ShapeError);
  CHECK_THROWS_AS((Shape{1, 2, 3, 4, 5}), ShapeError);
}

TEST_CASE("data length matches the shape") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  const Tensor t(Shape{3, 1, 2, 2});
  CHECK(t.size() == t.shape().numel());
}

TEST_CASE("elementwise_add") {
  const Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  const Tensor zero(Shape{2, 2}, 0.0f);
  CHECK(elementwise_add(a, zero).data()[3] == 4.0f);
  const auto same = elementwise_add(a, zero);
  CHECK(std::equal(same.data().begin(), same.data().end(), a.data().begin()));

  CHECK(elementwise_add(Tensor(Shape{1}, {1.0f}), Tensor(Shape{1}, {-1.0f}))[0] == 0.0f);

  CHECK_THROWS_AS(elementwise_add(a, Tensor(Shape{4}, 0.0f)), ShapeError);
}

TEST_CASE("elementwise_add matches a scalar loop, commutes and associates") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = oracle::random_tensor<float>(Shape{3, 3}, rng, -1e3, 1e3);
    const auto b = oracle::random_tensor<float>(Shape{3, 3}, rng, -1e3, 1e3);
    const auto c = oracle::random_tensor<float>(Shape{3, 3}, rng, -1e3, 1e3);
    const Tensor ab = elementwise_add(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(ab[i] == a[i] + b[i]);
    const Tensor ba = elementwise_add(b, a);
    const Tensor l = elementwise_add(elementwise_add(a, b), c);
    const Tensor r = elementwise_add(a, elementwise_add(b, c));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(ab[i] == ba[i]);
      // tolerance relative to the operand magnitudes, not to a cancelled sum
      const float mag = std::abs(a[i]) + std::abs(b[i]) + std::abs(c[i]);
      CHECK(std::abs(l[i] - r[i]) <= 1e-6f * mag);
    }
  }
}

TEST_CASE("scale") {
  Rng rng(3);
  const auto a = oracle::random_tensor<float>(Shape{2, 5}, rng);
  const Tensor same = scale(a, 1.0f);
  const Tensor zero = scale(a, 0.0f);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same[i] == a[i]);
    CHECK(zero[i] == 0.0f);
  }
  const Tensor half = scale(Tensor(Shape{2}, {2.0f, 4.0f}), 0.5f);
  CHECK(half[0] == 1.0f);
  CHECK(half[1] == 2.0f);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    Rng rng(5);
    const auto a = oracle::random_tensor<float>(Shape{3, 3}, rng);
    Tensor eye(Shape{3, 3}, 0.0f);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
    const Tensor out = matmul(a, eye);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out[i] == a[i]);
  }
  SUBCASE("fixed product") {
    const Tensor out = matmul(Tensor(Shape{2, 2}, {1, 2, 3, 4}), Tensor(Shape{2, 1}, {1, 1}));
    CHECK(out.shape() == Shape{2, 1});
    CHECK(out[0] == 3.0f);
    CHECK(out[1] == 7.0f);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
    CHECK_THROWS_AS(matmul(Tensor(Shape{6}), Tensor(Shape{6, 1})), ShapeError);
  }
}

TEST_CASE("matmul agrees with the triple loop") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(16)), k = 1 + static_cast<int>(rng.below(16)),
              p = 1 + static_cast<int>(rng.below(16));
    const auto a = oracle::random_tensor<double>(Shape{m, k}, rng);
    const auto b = oracle::random_tensor<double>(Shape{k, p}, rng);
    const Tensor got = matmul(a.cast<float>(), b.cast<float>());
    const Tensor64 want = oracle::matmul(a, b);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(std::abs(got[i] - want[i]) <= 1e-6 * std::max(1.0, static_cast<double>(k)));
  }
  const auto a = oracle::random_tensor<double>(Shape{4, 5}, rng);
  const auto b = oracle::random_tensor<double>(Shape{5, 6}, rng);
  const Tensor64 got = matmul(a, b), want = oracle::matmul(a, b);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("pad_nchw") {
  Rng rng(2);
  const auto a = oracle::random_tensor<float>(Shape{1, 2, 3, 3}, rng);
  const Tensor same = pad_nchw(a, 0, 0, 0, 0);
  CHECK(same.shape() == a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same[i] == a[i]);

  const Tensor seven = pad_nchw(Tensor(Shape{1, 1, 1, 1}, 7.0f), 1, 1, 1, 1);
  CHECK(seven.shape() == Shape{1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) CHECK(seven[i] == (i == 4 ? 7.0f : 0.0f));

  const Tensor p = pad_nchw(a, 1, 0, 2, 0);
  CHECK(p.shape() == Shape{1, 2, 4, 5});
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) {
        const bool inside = y >= 1 && x >= 2;
        CHECK(p.at(0, c, y, x) == (inside ? a.at(0, c, y - 1, x - 2) : 0.0f));
      }

  CHECK_THROWS_AS(pad_nchw(Tensor(Shape{3, 3}), 1, 1, 1, 1), ShapeError);
}

TEST_CASE("index arithmetic round-trips") {
  const Tensor t(Shape{2, 3, 4, 5});
  std::size_t flat = 0;
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 5; ++w) {
          REQUIRE(t.offset(n, c, h, w) == flat);
          const std::size_t rest = flat % 60;
          CHECK(static_cast<int>(flat / 60) == n);
          CHECK(static_cast<int>(rest / 20) == c);
          CHECK(static_cast<int>(rest % 20 / 5) == h);
          CHECK(static_cast<int>(rest % 5) == w);
          ++flat;
        }
}

TEST_CASE("cast to double and back is exact") {
  Rng rng(1);
  const auto a = oracle::random_tensor<float>(Shape{3, 4}, rng);
  const Tensor back = a.cast<double>().cast<float>();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(back[i] == a[i]);
}
