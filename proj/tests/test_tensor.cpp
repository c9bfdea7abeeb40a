#include <cmath>
#include <vector>

#include "attrxfer/common.hpp"
#include "attrxfer/optim.hpp"
#include "attrxfer/tensor.hpp"
#include "doctest.h"

using namespace attrxfer;

namespace {

Tensor c(Shape s, std::vector<double> v) {
  return Tensor::constant(std::move(s), std::move(v));
}

Tensor p(Shape s, std::vector<double> v) {
  return Tensor::param(std::move(s), std::move(v));
}

}  // namespace

TEST_CASE("elementwise values") {
  Tape t;
  Tensor a = c({2, 2}, {1, 2, 3, 4});
  Tensor b = c({2, 2}, {10, 20, 30, 40});
  CHECK(t.add(a, b).value() == std::vector<double>{11, 22, 33, 44});
  CHECK(t.sub(b, a).value() == std::vector<double>{9, 18, 27, 36});
  CHECK(t.mul(a, b).value() == std::vector<double>{10, 40, 90, 160});
  CHECK(t.scale(a, -2.0).value() == std::vector<double>{-2, -4, -6, -8});
  CHECK_THROWS_AS(t.add(a, c({2, 3}, std::vector<double>(6, 0.0))),
                  ShapeMismatch);
}

TEST_CASE("broadcast helpers") {
  Tape t;
  Tensor x = c({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.add_rowvec(x, c({3}, {10, 20, 30})).value() ==
        std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(t.mul_colvec(x, c({2}, {2, 0})).value() ==
        std::vector<double>{2, 4, 6, 0, 0, 0});
}

TEST_CASE("matmul hand cases") {
  Tape t;
  Tensor eye = c({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = c({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(t.matmul(eye, a).value() == a.value());
  Tensor m = c({2, 2}, {1, 2, 3, 4});
  Tensor n = c({2, 2}, {5, 6, 7, 8});
  CHECK(t.matmul(m, n).value() == std::vector<double>{19, 22, 43, 50});
  CHECK_THROWS_AS(t.matmul(a, a), ShapeMismatch);
}

TEST_CASE("structure ops") {
  Tape t;
  Tensor a = c({2, 2}, {1, 2, 3, 4});
  Tensor b = c({1, 2}, {5, 6});
  CHECK(t.concat(a, b, 0).value() == std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor d = c({2, 1}, {7, 8});
  CHECK(t.concat(a, d, 1).value() == std::vector<double>{1, 2, 7, 3, 4, 8});

  Tensor r0 = c({2}, {1, 2});
  Tensor r1 = c({2}, {3, 4});
  CHECK(t.stack_rows({r0, r1}).value() == std::vector<double>{1, 2, 3, 4});
  CHECK(t.stack_cols({r0, r1}).value() == std::vector<double>{1, 3, 2, 4});

  Tensor x = c({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(t.slice_rows(x, 1, 3).value() == std::vector<double>{3, 4, 5, 6});
  CHECK(t.row(x, 2).value() == std::vector<double>{5, 6});
  CHECK(t.col(x, 1).value() == std::vector<double>{2, 4, 6});
  CHECK(t.at(x, 1, 0).item() == 3.0);
  CHECK(t.slice(c({4}, {9, 8, 7, 6}), 1, 3).value() ==
        std::vector<double>{8, 7});

  CHECK(t.gather_rows(x, {2, 0, 2}).value() ==
        std::vector<double>{5, 6, 1, 2, 5, 6});
  CHECK(t.pick(x, {1, 0, 1}).value() == std::vector<double>{2, 3, 6});
}

TEST_CASE("reductions") {
  Tape t;
  Tensor x = c({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.sum(x).item() == 21.0);
  CHECK(t.mean(x).item() == doctest::Approx(3.5));
  CHECK(t.row_sum(x).value() == std::vector<double>{6, 15});
  CHECK(t.max_over_time(x).value() == std::vector<double>{4, 5, 6});
}

TEST_CASE("softmax family") {
  Tape t;
  Tensor z = c({1, 4}, {0, 0, 0, 0});
  const Tensor sz = t.softmax(z);
  for (double v : sz.value()) CHECK(v == doctest::Approx(0.25));
  const Tensor lz = t.log_softmax(z);
  for (double v : lz.value()) CHECK(v == doctest::Approx(-std::log(4.0)));

  // rows normalize independently
  Tensor x = c({2, 2}, {100, 100, -3, -3});
  const Tensor sx = t.softmax(x);
  for (double v : sx.value()) CHECK(v == doctest::Approx(0.5));

  Tensor logits = c({1, 4}, {1, 2, 3, 4});
  Tensor mask = c({1, 4}, {1, 0, 1, 0});
  Tensor m = t.masked_softmax(logits, mask);
  CHECK(m.v(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));
  CHECK(m.v(0, 1) == 0.0);
  CHECK(m.v(0, 2) == doctest::Approx(std::exp(2.0) / (1.0 + std::exp(2.0))));
  CHECK(m.v(0, 3) == 0.0);

  Tensor all_masked = c({1, 2}, {0, 0});
  CHECK_THROWS_AS(t.masked_softmax(c({1, 2}, {1, 2}), all_masked),
                  std::invalid_argument);
}

TEST_CASE("log_clamped floor") {
  Tape t;
  Tensor x = p({2}, {0.0, 2.0});
  Tensor y = t.log_clamped(x);
  CHECK(y.v(0) == doctest::Approx(std::log(1e-12)));
  CHECK(y.v(1) == doctest::Approx(std::log(2.0)));
  t.backward(t.sum(y));
  CHECK(x.g(0) == 0.0);  // clamped region passes no gradient
  CHECK(x.g(1) == doctest::Approx(0.5));
}

TEST_CASE("conv1d matches a direct sliding window") {
  Rng rng(3);
  const std::size_t time = 7, d = 3, f = 2, w = 3;
  std::vector<double> xv(time * d), kv(f * w * d);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  for (auto& v : kv) v = rng.uniform(-1, 1);
  Tape t;
  Tensor out = t.conv1d(c({time, d}, xv), c({f, w * d}, kv), w);
  REQUIRE(out.shape() == Shape{time - w + 1, f});
  for (std::size_t s = 0; s + w <= time; ++s)
    for (std::size_t j = 0; j < f; ++j) {
      double acc = 0.0;
      for (std::size_t u = 0; u < w; ++u)
        for (std::size_t e = 0; e < d; ++e)
          acc += xv[(s + u) * d + e] * kv[j * w * d + u * d + e];
      CHECK(out.v(s, j) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("hand-checked gradients") {
  SUBCASE("d(x*x)/dx = 2x") {
    Tape t;
    Tensor x = p({1}, {3.0});
    t.backward(t.mul(x, x));
    CHECK(x.g(0) == doctest::Approx(6.0));
  }
  SUBCASE("sum of softmax is constant, so its gradient vanishes") {
    Tape t;
    Tensor x = p({1, 4}, {0.3, -1.2, 2.0, 0.7});
    t.backward(t.sum(t.softmax(x)));
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(std::abs(x.g(i)) < 1e-14);
  }
  SUBCASE("max_over_time routes to the winner only") {
    Tape t;
    Tensor x = p({3, 2}, {1, 9, 5, 2, 3, 4});
    t.backward(t.sum(t.max_over_time(x)));
    CHECK(x.grad() == std::vector<double>{0, 1, 1, 0, 0, 0});
  }
  SUBCASE("gather_rows accumulates over repeated ids") {
    Tape t;
    Tensor e = p({3, 2}, {0, 0, 0, 0, 0, 0});
    t.backward(t.sum(t.gather_rows(e, {1, 1, 2})));
    CHECK(e.grad() == std::vector<double>{0, 0, 2, 2, 1, 1});
  }
  SUBCASE("matmul grads") {
    Tape t;
    Tensor a = p({1, 2}, {2, 3});
    Tensor b = p({2, 1}, {5, 7});
    t.backward(t.matmul(a, b));
    CHECK(a.grad() == std::vector<double>{5, 7});
    CHECK(b.grad() == std::vector<double>{2, 3});
  }
}

TEST_CASE("backward contract") {
  Tape t;
  Tensor x = p({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(t.backward(t.add(x, x)), std::invalid_argument);
  CHECK_THROWS_AS(t.backward(Tensor{}), std::invalid_argument);

  // a constant scalar loss is a no-op, not an error
  Tensor k = Tensor::scalar(0.0);
  t.backward(k);
  CHECK(x.grad() == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("recording toggle") {
  Tape t;
  t.set_recording(false);
  Tensor x = p({2}, {1, 2});
  Tensor y = t.mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(t.size() == 0);
  t.set_recording(true);
  Tensor z = t.mul(x, x);
  CHECK(z.requires_grad());
  CHECK(t.size() == 1);
  t.clear();
  CHECK(t.size() == 0);
}

TEST_CASE("adam on a quadratic") {
  Tensor x = Tensor::param({1}, {0.0});
  ParamList params{{"x", x}};
  AdamState st;
  st.cfg.lr = 0.05;
  st.init(params);
  for (int i = 0; i < 500; ++i) {
    Tape t;
    Tensor d = t.sub(x, Tensor::scalar(2.0));
    t.backward(t.mul(d, d));
    adam_step(params, st);
  }
  CHECK(std::abs(x.v(0) - 2.0) < 1e-2);
}

TEST_CASE("adam with zero gradient leaves the parameter untouched") {
  Tensor x = Tensor::param({2}, {1.5, -0.5});
  ParamList params{{"x", x}};
  AdamState st;
  st.init(params);
  adam_step(params, st);
  CHECK(x.value() == std::vector<double>{1.5, -0.5});
}

TEST_CASE("gradient clipping") {
  Tensor a = Tensor::param({1}, {0.0});
  Tensor b = Tensor::param({1}, {0.0});
  ParamList params{{"a", a}, {"b", b}};
  a.raw_grad()[0] = 3.0;
  b.raw_grad()[0] = 4.0;
  const double norm = clip_grad_norm(params, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.g(0) == doctest::Approx(0.6));
  CHECK(b.g(0) == doctest::Approx(0.8));
  CHECK(has_nonzero_grad(a));
  zero_grads(params);
  CHECK_FALSE(has_nonzero_grad(a));

  // norms at or below the cap are untouched
  a.raw_grad()[0] = 0.3;
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(0.3));
  CHECK(a.g(0) == doctest::Approx(0.3));
}

TEST_CASE("rng determinism") {
  Rng a(7), b(7), d(8);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = a.next_u64();
    all_equal = all_equal && x == b.next_u64();
    any_diff = any_diff || x != d.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff);

  std::vector<int> v1(20), v2(20);
  for (int i = 0; i < 20; ++i) v1[i] = v2[i] = i;
  Rng s1(5), s2(5);
  s1.shuffle(v1);
  s2.shuffle(v2);
  CHECK(v1 == v2);

  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform(-2.0, 3.0);
    CHECK(x >= -2.0);
    CHECK(x < 3.0);
  }
}
