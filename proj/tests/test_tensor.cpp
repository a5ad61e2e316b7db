#include "befb/tensor.hpp"

#include <cmath>

#include "doctest.h"
#include "test_util.hpp"

using namespace befb;
using befb::test::max_rel_err;
using befb::test::naive_conv;
using befb::test::random_tensor;

TEST_CASE("conv2d with identity 1x1 kernel is the identity, bit-exact") {
  Tensor x = random_tensor(2, 1, 4, 5, 42);
  Tensor k(1, 1, 1, 1);
  k.data[0] = 1.0;
  Tensor out = conv2d(x, k, nullptr, {1, 0});
  REQUIRE(out.shape == x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(out.data[i] == x.data[i]);
  }
}

TEST_CASE("conv2d of a zero input is zero") {
  Tensor x(1, 1, 5, 5);
  Tensor k = random_tensor(2, 1, 3, 3, 1);
  Tensor out = conv2d(x, k, nullptr, {1, 1});
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("conv2d matches the hand-computed Sobel response") {
  // grid [[1,2,3],[4,5,6],[7,8,9]] against the classic horizontal Sobel:
  // (1+4+3) - (7+16+9) = -24, frozen from the nested-loop oracle
  Tensor x(1, 1, 3, 3);
  x.data = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  Tensor k(1, 1, 3, 3);
  k.data = {1, 2, 1, 0, 0, 0, -1, -2, -1};
  Tensor out = conv2d(x, k, nullptr, {1, 0});
  REQUIRE(out.size() == 1);
  CHECK(out.data[0] == doctest::Approx(-24.0));
  CHECK(out.data[0] == naive_conv(x, k, nullptr, 1, 0).data[0]);
}

TEST_CASE("conv2d agrees with the naive oracle on random strided cases") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Tensor x = random_tensor(2, 3, 7, 6, seed);
    Tensor k = random_tensor(4, 3, 3, 3, seed + 100);
    std::vector<double> bias = {0.1, -0.5, 0.0, 2.0};
    for (std::size_t stride : {1u, 2u}) {
      for (std::size_t pad : {0u, 1u, 2u}) {
        Tensor a = conv2d(x, k, &bias, {stride, pad});
        Tensor b = naive_conv(x, k, &bias, stride, pad);
        REQUIRE(a.shape == b.shape);
        CHECK(max_rel_err(a, b) < 1e-12);
      }
    }
  }
}

TEST_CASE("conv2d rejects mismatched shapes naming both") {
  Tensor x(1, 2, 4, 4);
  Tensor k(1, 3, 3, 3);
  CHECK_THROWS_WITH_AS(conv2d(x, k, nullptr, {1, 0}),
                       doctest::Contains("[1,3,3,3]"), ShapeError);
  Tensor tiny(1, 2, 2, 2);
  CHECK_THROWS_AS(conv2d(tiny, Tensor(1, 2, 3, 3), nullptr, {1, 0}),
                  ShapeError);
}

TEST_CASE("relu forward and subgradient convention") {
  Tensor x(1, 3, 1, 1);
  x.data = {-1.0, 0.0, 2.0};
  Tensor out = relu(x);
  CHECK(out.data == std::vector<double>{0.0, 0.0, 2.0});

  Tensor all_neg = random_tensor(1, 2, 3, 3, 5);
  for (double& v : all_neg.data) v = -std::abs(v) - 0.1;
  for (double v : relu(all_neg).data) CHECK(v == 0.0);

  Tensor g(1, 3, 1, 1);
  g.data = {1.0, 1.0, 1.0};
  Tensor gin = relu_grad(x, g);
  CHECK(gin.data == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("maxpool2 forward values and tie rule") {
  Tensor x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};
  CHECK(maxpool2(x).data[0] == 4.0);

  Tensor asc(1, 1, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) asc.data[i] = double(i);
  Tensor out = maxpool2(asc);
  CHECK(out.data == std::vector<double>{5, 7, 13, 15});

  // constant tensor: grad routed to the first element of each window
  Tensor flat(1, 1, 4, 4, 3.0);
  Tensor pooled = maxpool2(flat);
  for (double v : pooled.data) CHECK(v == 3.0);
  Tensor g(1, 1, 2, 2, 1.0);
  Tensor gin = maxpool2_grad(flat, g);
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t w = 0; w < 4; ++w)
      CHECK(gin.at(0, 0, h, w) == ((h % 2 == 0 && w % 2 == 0) ? 1.0 : 0.0));

  CHECK_THROWS_AS(maxpool2(Tensor(1, 1, 3, 4)), ShapeError);
}

TEST_CASE("dense affine map basics") {
  Tensor eye(2, 2, 1, 1);
  eye.data = {1, 0, 0, 1};

  Tensor x(1, 2, 1, 1);
  x.data = {1, 2};
  CHECK(dense(x, eye, {0, 0}).data == std::vector<double>{1, 2});

  Tensor zero_w(2, 3, 1, 1);
  Tensor out = dense(x, zero_w, {5, 6, 7});
  CHECK(out.data == std::vector<double>{5, 6, 7});

  CHECK(dense(x, eye, {1, 1}).data == std::vector<double>{2, 3});

  CHECK_THROWS_AS(dense(x, Tensor(3, 2, 1, 1), {0, 0}), ShapeError);
}

TEST_CASE("softmax cross-entropy reference values") {
  Tensor uniform(3, 10, 1, 1, 0.7);
  auto [loss, grad] = softmax_cross_entropy(uniform, {0, 5, 9});
  CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Tensor peaked(1, 3, 1, 1);
  peaked.data = {200.0, 0.0, 0.0};
  CHECK(softmax_cross_entropy(peaked, {0}).first ==
        doctest::Approx(0.0).epsilon(1e-12));

  Tensor two(1, 2, 1, 1);
  auto [l2, g2] = softmax_cross_entropy(two, {0});
  CHECK(l2 == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(g2.data[0] == doctest::Approx(-0.5));
  CHECK(g2.data[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(softmax_cross_entropy(two, {2}), std::out_of_range);
  CHECK_THROWS_AS(softmax_cross_entropy(two, {-1}), std::out_of_range);
}

TEST_CASE("finite_difference sanity") {
  Tensor x = random_tensor(1, 2, 3, 3, 9);
  Tensor ones = finite_difference(
      [](const Tensor& t) {
        double s = 0;
        for (double v : t.data) s += v;
        return s;
      },
      x, 1e-5);
  for (double v : ones.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-8));

  Tensor quad = finite_difference(
      [](const Tensor& t) {
        double s = 0;
        for (double v : t.data) s += 0.5 * v * v;
        return s;
      },
      x, 1e-5);
  CHECK(max_rel_err(quad, x) < 1e-8);
}

TEST_CASE("analytic backward matches finite differences for all primitives") {
  const double h = 1e-5;
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    Tensor x = random_tensor(2, 2, 4, 4, seed);
    Tensor k = random_tensor(3, 2, 3, 3, seed + 1, 0.5);
    Tensor seed_w = random_tensor(2, 3, 4, 4, seed + 2);
    std::vector<double> bias = {0.0, 0.1, -0.1};
    const ConvSpec spec{1, 1};

    auto wsum = [](const Tensor& t, const Tensor& w) {
      double s = 0;
      for (std::size_t i = 0; i < t.size(); ++i) s += t.data[i] * w.data[i];
      return s;
    };

    ConvGrads cg = conv2d_grad(x, k, spec, seed_w);
    Tensor fd_in = finite_difference(
        [&](const Tensor& p) { return wsum(conv2d(p, k, &bias, spec), seed_w); },
        x, h);
    Tensor fd_k = finite_difference(
        [&](const Tensor& p) { return wsum(conv2d(x, p, &bias, spec), seed_w); },
        k, h);
    CHECK(max_rel_err(cg.input, fd_in) < 1e-4);
    CHECK(max_rel_err(cg.kernels, fd_k) < 1e-4);
    for (std::size_t o = 0; o < 3; ++o) {
      std::vector<double> b = bias;
      b[o] += h;
      const double up = wsum(conv2d(x, k, &b, spec), seed_w);
      b[o] -= 2 * h;
      const double down = wsum(conv2d(x, k, &b, spec), seed_w);
      CHECK(cg.bias[o] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
    }

    // relu away from the kink
    Tensor rx = x;
    for (double& v : rx.data)
      if (std::abs(v) < 1e-3) v += 0.01;
    Tensor rseed = random_tensor(2, 2, 4, 4, seed + 3);
    Tensor fd_relu = finite_difference(
        [&](const Tensor& p) { return wsum(relu(p), rseed); }, rx, h);
    CHECK(max_rel_err(relu_grad(rx, rseed), fd_relu) < 1e-4);

    Tensor pseed = random_tensor(2, 2, 2, 2, seed + 4);
    Tensor fd_pool = finite_difference(
        [&](const Tensor& p) { return wsum(maxpool2(p), pseed); }, x, h);
    CHECK(max_rel_err(maxpool2_grad(x, pseed), fd_pool) < 1e-4);

    Tensor dx = random_tensor(3, 5, 1, 1, seed + 5);
    Tensor dw = random_tensor(5, 4, 1, 1, seed + 6);
    std::vector<double> db(4, 0.2);
    Tensor dseed = random_tensor(3, 4, 1, 1, seed + 7);
    DenseGrads dg = dense_grad(dx, dw, dseed);
    Tensor fd_dx = finite_difference(
        [&](const Tensor& p) { return wsum(dense(p, dw, db), dseed); }, dx, h);
    Tensor fd_dw = finite_difference(
        [&](const Tensor& p) { return wsum(dense(dx, p, db), dseed); }, dw, h);
    CHECK(max_rel_err(dg.input, fd_dx) < 1e-4);
    CHECK(max_rel_err(dg.weights, fd_dw) < 1e-4);

    Tensor logits = random_tensor(3, 4, 1, 1, seed + 8);
    std::vector<int> labels = {1, 0, 3};
    auto [loss, grad] = softmax_cross_entropy(logits, labels);
    (void)loss;
    Tensor fd_sm = finite_difference(
        [&](const Tensor& p) { return softmax_cross_entropy(p, labels).first; },
        logits, h);
    CHECK(max_rel_err(grad, fd_sm) < 1e-4);
  }
}

TEST_CASE("operations are deterministic down to the bit pattern") {
  Tensor x = random_tensor(2, 3, 6, 6, 77);
  Tensor k = random_tensor(2, 3, 3, 3, 78);
  Tensor a = conv2d(x, k, nullptr, {1, 1});
  Tensor b = conv2d(x, k, nullptr, {1, 1});
  CHECK(a.data == b.data);
}
