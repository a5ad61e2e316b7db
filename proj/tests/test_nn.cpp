#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "befb/backbones.hpp"
#include "befb/layers.hpp"
#include "befb/net.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace befb;
using befb::test::max_rel_err;
using befb::test::random_tensor;

namespace {

Network tiny_befb_net(std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  BackboneConfig cfg{BackboneFamily::vgg_small, {2, 3}, 8};
  Network base = build_small_vgg(cfg, {1, 8, 8}, 3, rng);
  BranchParams bp;
  bp.sobel_layers = 2;
  bp.t = 0.6;
  bp.mode = SobelMode::multiple;
  return build_integrated(base, bp, rng);
}

double net_loss(const Network& net, const Tensor& x,
                const std::vector<int>& labels) {
  Tensor logits = net.forward(x);
  return softmax_cross_entropy(logits, labels).first;
}

struct TempPath {
  std::string path;
  explicit TempPath(const std::string& name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TempPath() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("sobel layer: shapes, constraints, additive fusion") {
  std::mt19937_64 rng(1);
  SobelLayer single(SobelMode::single, rng);
  CHECK(single.kinds.size() == 1);
  SobelLayer multi(SobelMode::multiple, rng);
  CHECK(multi.kinds.size() == 4);
  CHECK(multi.feasible());

  Tensor x = random_tensor(2, 1, 6, 6, 3);
  Cache cache;
  Tensor out = multi.forward(x, cache);
  CHECK(out.shape == x.shape);  // pad 1, stride 1, one output channel

  // additive fusion: output equals the sum of the four branch convolutions
  Tensor expected(2, 1, 6, 6);
  for (std::size_t i = 0; i < multi.kernels.size(); ++i) {
    Tensor part = conv2d(x, multi.kernels[i], nullptr, {1, 1});
    for (std::size_t j = 0; j < expected.size(); ++j)
      expected.data[j] += part.data[j];
  }
  CHECK(max_rel_err(out, expected) < 1e-12);

  // project() is the clamp; after a rough gradient step it restores feasibility
  for (Tensor& k : multi.kernels)
    for (double& v : k.data) v += 2.0;
  CHECK_FALSE(multi.feasible());
  multi.project();
  CHECK(multi.feasible());
}

TEST_CASE("grayscale layer averages channels and spreads gradient evenly") {
  GrayscaleLayer gray;
  Tensor x(1, 3, 1, 1);
  x.data = {0.0, 0.3, 0.6};
  Cache cache;
  Tensor out = gray.forward(x, cache);
  CHECK(out.shape == std::array<std::size_t, 4>{1, 1, 1, 1});
  CHECK(out.data[0] == doctest::Approx(0.3));

  Tensor g(1, 1, 1, 1, 1.0);
  Tensor gin = gray.backward(g, cache, "", nullptr, {});
  for (double v : gin.data) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("befb branch output is binary and spatially sized like the input") {
  std::mt19937_64 rng(11);
  auto branch = build_befb_branch(2, 0.8, SobelMode::multiple, rng);
  REQUIRE(branch.size() == 5);  // grayscale, 2x sobel, threshold, flatten
  Tensor x = random_tensor(2, 3, 8, 8, 4);
  std::vector<Cache> caches(branch.size());
  Tensor cur = x;
  for (std::size_t i = 0; i < branch.size(); ++i)
    cur = branch[i]->forward(cur, caches[i]);
  CHECK(cur.shape == std::array<std::size_t, 4>{2, 64, 1, 1});
  for (double v : cur.data) CHECK((v == 0.0 || v == 1.0));

  CHECK_THROWS(build_befb_branch(0, 0.8, SobelMode::single, rng));
}

TEST_CASE("network forward concatenates backbone first") {
  Network net = tiny_befb_net();
  const std::size_t branch_width = 8 * 8;
  Tensor x = random_tensor(2, 1, 8, 8, 21);
  NetCache cache;
  Tensor logits = net.forward(x, &cache);
  CHECK(logits.shape == std::array<std::size_t, 4>{2, 3, 1, 1});
  CHECK(cache.valid);
  CHECK(cache.branch_flat.c() == branch_width);
  for (double v : cache.branch_flat.data) CHECK((v == 0.0 || v == 1.0));

  CHECK_THROWS_AS(net.forward(random_tensor(1, 2, 8, 8, 1)), ShapeError);
}

TEST_CASE("copied networks are deep and independent") {
  Network net = tiny_befb_net();
  Network copy = net;
  CHECK(copy.param_count() == net.param_count());
  Tensor x = random_tensor(1, 1, 8, 8, 30);
  Tensor a = net.forward(x);
  Tensor b = copy.forward(x);
  CHECK(a.data == b.data);

  // perturbing the copy leaves the original untouched
  auto params = copy.params();
  REQUIRE(!params.empty());
  for (double& v : params[0].value->data) v += 0.5;
  Tensor c = copy.forward(x);
  Tensor d = net.forward(x);
  CHECK(d.data == a.data);
  CHECK(c.data != a.data);
}

TEST_CASE("parameter gradients match finite differences through the net") {
  // STE with a frozen threshold pattern is exact for parameters downstream of
  // the binarization only; restrict the FD check to backbone and head params,
  // which see a genuinely differentiable path.
  Network net = tiny_befb_net(9);
  // zero-initialized biases put relu pre-activations exactly on the kink
  // wherever a receptive field is all-zero; shift off that measure-zero set
  for (ParamRef p : net.params())
    if (p.name.find("bias") != std::string::npos)
      for (double& v : p.value->data) v += 0.0137;
  Tensor x = random_tensor(2, 1, 8, 8, 40, 0.3);
  for (double& v : x.data) v = std::abs(v);
  std::vector<int> labels = {0, 2};

  NetCache cache;
  Tensor logits = net.forward(x, &cache);
  auto [loss, grad_logits] = softmax_cross_entropy(logits, labels);
  (void)loss;
  ParamGrads grads = net.backward(cache, grad_logits, {});

  int checked = 0;
  for (ParamRef p : net.params()) {
    if (p.name.rfind("branch.", 0) == 0) continue;
    CAPTURE(p.name);
    REQUIRE(grads.count(p.name) == 1);
    auto fd_at = [&](double h) {
      return finite_difference(
          [&](const Tensor& cand) {
            Tensor saved = *p.value;
            *p.value = cand;
            double val = net_loss(net, x, labels);
            *p.value = saved;
            return val;
          },
          *p.value, h);
    };
    Tensor fd = fd_at(1e-5);
    // a relu kink or maxpool argmax flip inside the stencil makes the FD
    // estimate step-size dependent; skip those non-smooth points
    if (max_rel_err(fd, fd_at(5e-6)) > 1e-5) continue;
    CHECK(max_rel_err(grads.at(p.name), fd) < 1e-4);
    ++checked;
  }
  CHECK(checked > 4);
}

TEST_CASE("backward without a fresh cache is rejected") {
  Network net = tiny_befb_net();
  NetCache cache;
  Tensor g(2, 3, 1, 1, 0.1);
  CHECK_THROWS_AS(net.backward(cache, g, {}), std::logic_error);
}

TEST_CASE("input_gradient honours the surrogate mode") {
  Network net = tiny_befb_net(13);
  Tensor x = random_tensor(2, 1, 8, 8, 50, 0.3);
  std::vector<int> labels = {1, 0};

  Tensor g_ste = net.input_gradient(x, labels, GradMode::ste);
  Tensor g_zero = net.input_gradient(x, labels, GradMode::zero);
  Tensor g_sig = net.input_gradient(x, labels, GradMode::sigmoid);
  CHECK(g_ste.shape == x.shape);
  CHECK(g_zero.shape == x.shape);

  // zero mode kills the branch path, so it differs from STE in general
  CHECK(g_ste.data != g_zero.data);
  CHECK(g_ste.data != g_sig.data);

  // with the branch path dead, zero mode must equal the backbone-only gradient
  Network bare = net;
  bare.branch.clear();
  // cannot call forward on bare (head expects concatenated width), so check
  // instead that zero-mode gradients are identical across surrogate-irrelevant
  // repeat calls (pure function).
  Tensor again = net.input_gradient(x, labels, GradMode::zero);
  CHECK(again.data == g_zero.data);
}

TEST_CASE("project_constraints restores feasibility after violation") {
  Network net = tiny_befb_net();
  CHECK(net.constraints_satisfied());
  for (ParamRef p : net.params()) {
    if (p.name.rfind("branch.", 0) == 0)
      for (double& v : p.value->data) v += 3.0;
  }
  CHECK_FALSE(net.constraints_satisfied());
  net.project_constraints();
  CHECK(net.constraints_satisfied());
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Network net = tiny_befb_net(77);
  TempPath tmp("befb_test_ckpt.befb");
  save_checkpoint(net, tmp.path);
  Network loaded = load_checkpoint(tmp.path);

  CHECK(loaded.name == net.name);
  CHECK(loaded.class_count == net.class_count);
  CHECK(loaded.input_shape == net.input_shape);
  CHECK(loaded.descriptor == net.descriptor);
  CHECK(loaded.param_count() == net.param_count());

  auto a = net.params();
  auto b = loaded.params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].value->data == b[i].value->data);
  }

  Tensor x = random_tensor(2, 1, 8, 8, 3);
  CHECK(net.forward(x).data == loaded.forward(x).data);
}

TEST_CASE("checkpoint loader rejects malformed files") {
  Network net = tiny_befb_net();
  TempPath tmp("befb_test_bad.befb");

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nope.befb"), CheckpointError);
  }

  SUBCASE("bad magic") {
    std::ofstream out(tmp.path, std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
    out.close();
    CHECK_THROWS_AS(load_checkpoint(tmp.path), CheckpointError);
  }

  SUBCASE("truncated payload") {
    save_checkpoint(net, tmp.path);
    auto size = std::filesystem::file_size(tmp.path);
    std::filesystem::resize_file(tmp.path, size - 16);
    CHECK_THROWS_AS(load_checkpoint(tmp.path), CheckpointError);
  }
}

TEST_CASE("residual block identity skip and projection") {
  std::mt19937_64 rng(6);
  ResidualBlock same(3, 3, rng);
  CHECK(same.projection == nullptr);
  ResidualBlock grow(3, 5, rng);
  CHECK(grow.projection != nullptr);

  Tensor x = random_tensor(2, 3, 6, 6, 8);
  Cache cache;
  Tensor out = same.forward(x, cache);
  CHECK(out.shape == x.shape);
  Cache cache2;
  Tensor out2 = grow.forward(x, cache2);
  CHECK(out2.c() == 5);

  // zeroed convs reduce the same-width block to relu of the identity skip
  ResidualBlock zeroed(3, 3, rng);
  for (double& v : zeroed.conv1->kernels.data) v = 0;
  for (double& v : zeroed.conv2->kernels.data) v = 0;
  Cache cache3;
  Tensor skip = zeroed.forward(x, cache3);
  Tensor expect = relu(x);
  CHECK(max_rel_err(skip, expect) < 1e-12);
}
