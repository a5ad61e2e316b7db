#include "befb/edge.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "test_util.hpp"

using namespace befb;
using befb::test::random_tensor;

TEST_CASE("edge patterns encode the four orientations") {
  CHECK(edge_pattern(EdgeKind::horizontal) ==
        std::array<int, 9>{1, 1, 1, 0, 0, 0, -1, -1, -1});
  CHECK(edge_pattern(EdgeKind::vertical) ==
        std::array<int, 9>{1, 0, -1, 1, 0, -1, 1, 0, -1});
  CHECK(edge_pattern(EdgeKind::pos_diagonal) ==
        std::array<int, 9>{1, 1, 0, 1, 0, -1, 0, -1, -1});
  CHECK(edge_pattern(EdgeKind::neg_diagonal) ==
        std::array<int, 9>{0, 1, 1, -1, 0, 1, -1, -1, 0});
  // every pattern balances: three +1, three -1, three 0
  for (EdgeKind kind : {EdgeKind::horizontal, EdgeKind::vertical,
                        EdgeKind::pos_diagonal, EdgeKind::neg_diagonal}) {
    int pos = 0, neg = 0, zero = 0;
    for (int v : edge_pattern(kind)) (v > 0 ? pos : v < 0 ? neg : zero)++;
    CHECK(pos == 3);
    CHECK(neg == 3);
    CHECK(zero == 3);
  }
}

TEST_CASE("edge kind names round-trip") {
  for (EdgeKind kind : {EdgeKind::horizontal, EdgeKind::vertical,
                        EdgeKind::pos_diagonal, EdgeKind::neg_diagonal}) {
    CHECK(edge_kind_from_name(edge_kind_name(kind)) == kind);
  }
  CHECK_THROWS(edge_kind_from_name("diagonal"));
}

TEST_CASE("default kernels are the scaled Sobel values and feasible") {
  EdgeKernel h = default_edge_kernel(EdgeKind::horizontal);
  CHECK(h.w == std::array<double, 9>{0.5, 1.0, 0.5, 0, 0, 0, -0.5, -1.0, -0.5});
  EdgeKernel v = default_edge_kernel(EdgeKind::vertical);
  CHECK(v.w == std::array<double, 9>{0.5, 0, -0.5, 1.0, 0, -1.0, 0.5, 0, -0.5});
  for (EdgeKind kind : {EdgeKind::horizontal, EdgeKind::vertical,
                        EdgeKind::pos_diagonal, EdgeKind::neg_diagonal}) {
    CHECK(edge_kernel_feasible(default_edge_kernel(kind)));
  }
}

TEST_CASE("init jitters but stays feasible and deterministic per seed") {
  std::mt19937_64 rng_a(7), rng_b(7), rng_c(8);
  EdgeKernel a = init_edge_kernel(EdgeKind::vertical, rng_a);
  EdgeKernel b = init_edge_kernel(EdgeKind::vertical, rng_b);
  EdgeKernel c = init_edge_kernel(EdgeKind::vertical, rng_c);
  CHECK(a.w == b.w);
  CHECK(a.w != c.w);
  CHECK(edge_kernel_feasible(a));
  const EdgeKernel base = default_edge_kernel(EdgeKind::vertical);
  for (std::size_t i = 0; i < 9; ++i) {
    if (edge_pattern(EdgeKind::vertical)[i] == 0) {
      CHECK(a.w[i] == 0.0);
    } else {
      CHECK(std::abs(a.w[i] - base.w[i]) <= 0.05 + 1e-12);
    }
  }
}

TEST_CASE("projection clamps into the pattern intervals and is idempotent") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> wide(-3.0, 3.0);
  for (EdgeKind kind : {EdgeKind::horizontal, EdgeKind::vertical,
                        EdgeKind::pos_diagonal, EdgeKind::neg_diagonal}) {
    for (int trial = 0; trial < 50; ++trial) {
      EdgeKernel k{kind, {}};
      for (double& v : k.w) v = wide(rng);
      project_edge_kernel(k);
      CHECK(edge_kernel_feasible(k));
      EdgeKernel again = k;
      project_edge_kernel(again);
      CHECK(again.w == k.w);
    }
    // identity on an already-feasible kernel
    EdgeKernel feasible = default_edge_kernel(kind);
    EdgeKernel copy = feasible;
    project_edge_kernel(copy);
    CHECK(copy.w == feasible.w);
  }
}

TEST_CASE("feasibility rejects each kind of violation") {
  EdgeKernel k = default_edge_kernel(EdgeKind::horizontal);
  CHECK(edge_kernel_feasible(k));
  k.w[0] = 1.5;  // positive slot above 1
  CHECK_FALSE(edge_kernel_feasible(k));
  k = default_edge_kernel(EdgeKind::horizontal);
  k.w[0] = -0.1;  // positive slot below 0
  CHECK_FALSE(edge_kernel_feasible(k));
  k = default_edge_kernel(EdgeKind::horizontal);
  k.w[4] = 1e-9;  // zero slot must stay exactly 0
  CHECK_FALSE(edge_kernel_feasible(k));
  k = default_edge_kernel(EdgeKind::horizontal);
  k.w[8] = -1.2;  // negative slot below -1
  CHECK_FALSE(edge_kernel_feasible(k));
  k = default_edge_kernel(EdgeKind::horizontal);
  k.w[8] = 0.2;  // negative slot above 0
  CHECK_FALSE(edge_kernel_feasible(k));
}

TEST_CASE("threshold binarizes against t * channel max") {
  Tensor x(1, 1, 2, 2);
  x.data = {4, 2, 1, 3};
  Tensor out = threshold_forward(x, 0.5);
  CHECK(out.data == std::vector<double>{1, 1, 0, 1});

  // exact equality with the level counts as above threshold
  Tensor levels = threshold_levels(x, 0.5);
  CHECK(levels.size() == 1);
  CHECK(levels.data[0] == doctest::Approx(2.0));
  CHECK(out.data[1] == 1.0);

  // nonpositive channel max emits zeros
  Tensor neg(1, 2, 2, 2);
  neg.data = {-1, -2, -3, -4, 0, -1, 0, -2};
  Tensor nout = threshold_forward(neg, 0.5);
  for (double v : nout.data) CHECK(v == 0.0);

  SUBCASE("output is binary for random inputs") {
    Tensor r = random_tensor(3, 4, 5, 5, 99);
    for (double t : {0.2, 0.5, 0.8, 1.0}) {
      Tensor o = threshold_forward(r, t);
      for (double v : o.data) CHECK((v == 0.0 || v == 1.0));
    }
  }

  SUBCASE("active-pixel count is non-increasing in t") {
    Tensor r = random_tensor(2, 3, 6, 6, 1234);
    for (double& v : r.data) v = std::abs(v);
    double prev = 1e9;
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      Tensor o = threshold_forward(r, t);
      double on = 0;
      for (double v : o.data) on += v;
      CHECK(on <= prev);
      prev = on;
    }
  }

  SUBCASE("per-channel independence") {
    Tensor two(1, 2, 1, 2);
    two.data = {10, 1, 0.2, 0.15};
    Tensor o = threshold_forward(two, 0.9);
    CHECK(o.data == std::vector<double>{1, 0, 1, 0});
  }
}

TEST_CASE("threshold surrogate gradients") {
  Tensor x = random_tensor(2, 2, 3, 3, 17);
  Tensor g = random_tensor(2, 2, 3, 3, 18);
  Tensor levels = threshold_levels(x, 0.6);

  Tensor ste = threshold_backward(g, x, levels, GradMode::ste);
  CHECK(ste.data == g.data);

  Tensor zero = threshold_backward(g, x, levels, GradMode::zero);
  for (double v : zero.data) CHECK(v == 0.0);

  Tensor sig = threshold_backward(g, x, levels, GradMode::sigmoid);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t h = 0; h < x.h(); ++h)
        for (std::size_t w = 0; w < x.w(); ++w) {
          const double x0 = levels.at(n, c, 0, 0);
          const double s = 1.0 / (1.0 + std::exp(-(x.at(n, c, h, w) - x0)));
          CHECK(sig.at(n, c, h, w) ==
                doctest::Approx(g.at(n, c, h, w) * s * (1.0 - s)));
        }

  Tensor sig_dec =
      threshold_backward(g, x, levels, GradMode::sigmoid, true);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    CHECK(sig_dec.data[i] == doctest::Approx(-sig.data[i]));
  }

  // the sigmoid factor peaks at the threshold itself
  Tensor at_level(1, 1, 1, 1);
  at_level.data = {levels.data[0]};
  Tensor one(1, 1, 1, 1, 1.0);
  Tensor lvl(1, 1, 1, 1);
  lvl.data = {levels.data[0]};
  Tensor peak = threshold_backward(one, at_level, lvl, GradMode::sigmoid);
  CHECK(peak.data[0] == doctest::Approx(0.25));
}

TEST_CASE("grad mode names round-trip") {
  for (GradMode m : {GradMode::ste, GradMode::zero, GradMode::sigmoid}) {
    CHECK(grad_mode_from_name(grad_mode_name(m)) == m);
  }
  CHECK_THROWS(grad_mode_from_name("identity"));
}
