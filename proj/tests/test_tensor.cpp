#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "convscope/errors.hpp"
#include "convscope/tensor.hpp"
#include "test_util.hpp"

using namespace convscope;
using test::random_tensor;

TEST_CASE("tensor construction fills and shapes") {
  Tensor z({1, 1, 2, 2}, 0.0);
  CHECK(z.size() == 4);
  for (int64_t i = 0; i < 4; ++i) CHECK(z.data()[i] == 0.0);

  Tensor s({1, 1, 1, 1}, 7.0);
  CHECK(s.size() == 1);
  CHECK(s.at(0, 0, 0, 0) == 7.0);

  Tensor ones({2, 3, 4, 5}, 1.0);
  CHECK(ones.size() == 120);
  CHECK(sum(ones) == 120.0);
}

TEST_CASE("extent product overflow is a construction error") {
  Extent4 huge{1'000'000'000, 1'000'000'000, 1'000'000'000, 4};
  CHECK_THROWS_AS(Tensor{huge}, ShapeError);
  CHECK_THROWS_AS((void)huge.count(), ShapeError);
  Extent4 negative{-1, 1, 1, 1};
  CHECK_THROWS_AS((void)negative.count(), ShapeError);
}

TEST_CASE("indexing round-trip reproduces every value exactly") {
  Extent4 s{2, 3, 4, 5};
  Tensor t(s);
  double v = 0.0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t h = 0; h < s.h; ++h)
        for (int64_t w = 0; w < s.w; ++w) t.at(n, c, h, w) = v++;
  v = 0.0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t h = 0; h < s.h; ++h)
        for (int64_t w = 0; w < s.w; ++w) CHECK(t.at(n, c, h, w) == v++);
  // w is the fastest-moving index
  CHECK(t.data()[1] == t.at(0, 0, 0, 1));
}

TEST_CASE("flip_hw reverses rows and columns") {
  Tensor t = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor f = flip_hw(t);
  CHECK(f.at(0, 0, 0, 0) == 4);
  CHECK(f.at(0, 0, 0, 1) == 3);
  CHECK(f.at(0, 0, 1, 0) == 2);
  CHECK(f.at(0, 0, 1, 1) == 1);

  Tensor one = Tensor::from_values({1, 1, 1, 1}, {5});
  CHECK(flip_hw(one) == one);
}

TEST_CASE("flip_hw is an involution over random shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    Extent4 s{rng.uniform_int(1, 3), rng.uniform_int(1, 4), rng.uniform_int(1, 7),
              rng.uniform_int(1, 7)};
    Tensor t = random_tensor(s, rng);
    CHECK(flip_hw(flip_hw(t)) == t);
  }
}

TEST_CASE("reduce_sum hand cases") {
  Tensor t = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor r = reduce_sum(t, Axes::hw());
  CHECK(r.shape() == Extent4{1, 1, 1, 1});
  CHECK(r.at(0, 0, 0, 0) == 10.0);

  Tensor z({2, 3, 2, 2}, 0.0);
  CHECK(sum(reduce_sum(z, Axes::all())) == 0.0);

  Tensor noop = reduce_sum(t, Axes::none());
  CHECK(noop == t);
}

TEST_CASE("reduce_sum conserves totals and matches a scalar fold") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Extent4 s{rng.uniform_int(1, 3), rng.uniform_int(1, 5), rng.uniform_int(1, 6),
              rng.uniform_int(1, 6)};
    Tensor t = random_tensor(s, rng);
    double direct = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) direct += t.data()[i];

    Axes axes{rng.uniform() < 0.5, rng.uniform() < 0.5, rng.uniform() < 0.5,
              rng.uniform() < 0.5};
    Tensor reduced = reduce_sum(t, axes);
    CHECK(sum(reduced) == doctest::Approx(direct).epsilon(1e-6));
    CHECK(sum(reduce_sum(t, Axes::all())) == doctest::Approx(direct).epsilon(1e-6));
  }
}

TEST_CASE("reshape keeps data and rejects count changes") {
  Tensor t = Tensor::from_values({1, 2, 2, 1}, {1, 2, 3, 4});
  Tensor r = t.reshaped({1, 4, 1, 1});
  CHECK(r.at(0, 3, 0, 0) == 4);
  CHECK_THROWS_AS(t.reshaped({1, 3, 1, 1}), ShapeError);
}

TEST_CASE("finite checks") {
  Tensor t({1, 1, 1, 2}, 1.0);
  CHECK(all_finite(t));
  t.data()[1] = std::nan("");
  CHECK(!all_finite(t));
}
