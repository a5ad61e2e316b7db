#include "befb/attacks.hpp"

#include <cmath>
#include <random>

#include "befb/backbones.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace befb;
using befb::test::random_tensor;

namespace {

Network tiny_net(std::uint64_t seed = 4) {
  std::mt19937_64 rng(seed);
  BackboneConfig cfg{BackboneFamily::vgg_small, {2, 3}, 8};
  Network base = build_small_vgg(cfg, {1, 8, 8}, 3, rng);
  BranchParams bp;
  bp.t = 0.6;
  return build_integrated(base, bp, rng);
}

Tensor image_batch(std::size_t n, std::uint64_t seed) {
  Tensor x = random_tensor(n, 1, 8, 8, seed, 0.25);
  for (double& v : x.data) v = std::min(1.0, std::abs(v));
  return x;
}

}  // namespace

TEST_CASE("fgsm: per-pixel step is 0 or exactly epsilon before clipping") {
  Network net = tiny_net();
  Tensor x = image_batch(4, 10);
  std::vector<int> labels = {0, 1, 2, 0};
  AttackConfig cfg;
  cfg.kind = AttackKind::fgsm;
  cfg.epsilon = 16;
  cfg.grad_mode = GradMode::ste;

  Tensor adv = fgsm(net, x, labels, cfg);
  REQUIRE(adv.shape == x.shape);
  const double eps = 16.0 / 255.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = adv.data[i] - x.data[i];
    CHECK(adv.data[i] >= 0.0);
    CHECK(adv.data[i] <= 1.0);
    CHECK(std::abs(d) <= eps + 1e-12);
    // unclipped pixels move by exactly 0 or eps in magnitude
    if (adv.data[i] > 0.0 && adv.data[i] < 1.0) {
      const bool zero_step = std::abs(d) < 1e-12;
      const bool full_step = std::abs(std::abs(d) - eps) < 1e-12;
      CHECK((zero_step || full_step));
    }
  }

  // epsilon = 0 leaves the input untouched
  cfg.epsilon = 0;
  CHECK(fgsm(net, x, labels, cfg).data == x.data);
}

TEST_CASE("fgsm is deterministic") {
  Network net = tiny_net();
  Tensor x = image_batch(2, 11);
  std::vector<int> labels = {1, 2};
  AttackConfig cfg;
  cfg.epsilon = 8;
  CHECK(fgsm(net, x, labels, cfg).data == fgsm(net, x, labels, cfg).data);
}

TEST_CASE("pgd: every iterate stays in the eps ball and in [0,1]") {
  Network net = tiny_net();
  Tensor x = image_batch(2, 12);
  std::vector<int> labels = {0, 2};
  AttackConfig cfg;
  cfg.kind = AttackKind::pgd;
  cfg.epsilon = 80;
  cfg.stepsize = 20;
  cfg.steps = 8;
  cfg.grad_mode = GradMode::ste;
  const double eps = cfg.epsilon01();

  std::size_t seen = 0, cases = 0;
  std::function<void(const Tensor&)> observer = [&](const Tensor& it) {
    ++seen;
    for (std::size_t i = 0; i < it.size(); ++i) {
      ++cases;
      CHECK(it.data[i] >= 0.0);
      CHECK(it.data[i] <= 1.0);
      CHECK(std::abs(it.data[i] - x.data[i]) <= eps + 1e-12);
    }
  };
  std::mt19937_64 rng(55);
  Tensor adv = pgd(net, x, labels, cfg, rng, &observer);
  CHECK(seen == 9);  // random start plus one per step
  CHECK(cases >= 1000);  // 9 iterates * 128 pixels
  for (std::size_t i = 0; i < adv.size(); ++i) {
    CHECK(std::abs(adv.data[i] - x.data[i]) <= eps + 1e-12);
  }
}

TEST_CASE("pgd random start is inside the ball and seed-deterministic") {
  Network net = tiny_net();
  Tensor x = image_batch(2, 13);
  std::vector<int> labels = {1, 1};
  AttackConfig cfg;
  cfg.kind = AttackKind::pgd;
  cfg.epsilon = 24;
  cfg.stepsize = 8;
  cfg.steps = 3;

  std::mt19937_64 a(7), b(7), c(8);
  Tensor r1 = pgd(net, x, labels, cfg, a);
  Tensor r2 = pgd(net, x, labels, cfg, b);
  Tensor r3 = pgd(net, x, labels, cfg, c);
  CHECK(r1.data == r2.data);
  CHECK(r1.data != r3.data);

  cfg.random_init = false;
  std::mt19937_64 d(1), e(2);
  CHECK(pgd(net, x, labels, cfg, d).data == pgd(net, x, labels, cfg, e).data);
}

TEST_CASE("pgd with one step and no random start matches fgsm at stepsize") {
  Network net = tiny_net();
  Tensor x = image_batch(2, 14);
  std::vector<int> labels = {2, 0};
  AttackConfig p;
  p.kind = AttackKind::pgd;
  p.epsilon = 32;
  p.stepsize = 8;
  p.steps = 1;
  p.random_init = false;
  p.grad_mode = GradMode::ste;
  AttackConfig f;
  f.kind = AttackKind::fgsm;
  f.epsilon = 8;  // pgd stepsize below epsilon: projection is a no-op
  f.grad_mode = GradMode::ste;
  std::mt19937_64 rng(1);
  CHECK(pgd(net, x, labels, p, rng).data == fgsm(net, x, labels, f).data);
}

TEST_CASE("gaussian perturbation statistics and clipping") {
  Tensor x(1, 1, 100, 100, 0.5);
  AttackConfig cfg;
  cfg.kind = AttackKind::gaussian;
  cfg.sigma = 0.1;
  std::mt19937_64 rng(3);
  Tensor noisy = gaussian_perturb(x, cfg, rng);
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    CHECK(noisy.data[i] >= 0.0);
    CHECK(noisy.data[i] <= 1.0);
    const double d = noisy.data[i] - 0.5;
    sum += d;
    sq += d * d;
  }
  const double n = double(noisy.size());
  CHECK(std::abs(sum / n) < 0.01);                     // mean ~ 0
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.1).epsilon(0.05));

  cfg.sigma = 0.0;
  std::mt19937_64 rng2(3);
  CHECK(gaussian_perturb(x, cfg, rng2).data == x.data);

  cfg.sigma = -0.5;
  CHECK_THROWS(gaussian_perturb(x, cfg, rng2));
}

TEST_CASE("run_attack dispatches on kind") {
  Network net = tiny_net();
  Tensor x = image_batch(1, 15);
  std::vector<int> labels = {0};
  std::mt19937_64 rng(9);

  AttackConfig f;
  f.kind = AttackKind::fgsm;
  f.epsilon = 8;
  CHECK(run_attack(net, x, labels, f, rng).data == fgsm(net, x, labels, f).data);

  AttackConfig g;
  g.kind = AttackKind::gaussian;
  g.sigma = 0.2;
  std::mt19937_64 r1(4), r2(4);
  CHECK(run_attack(net, x, labels, g, r1).data ==
        gaussian_perturb(x, g, r2).data);
}

TEST_CASE("attack labels and kind names") {
  for (AttackKind k : {AttackKind::fgsm, AttackKind::pgd, AttackKind::gaussian})
    CHECK(attack_kind_from_name(attack_kind_name(k)) == k);
  CHECK_THROWS(attack_kind_from_name("cw"));

  AttackConfig cfg;
  cfg.kind = AttackKind::fgsm;
  cfg.epsilon = 80;
  cfg.grad_mode = GradMode::zero;
  CHECK(cfg.label().find("fgsm") != std::string::npos);
  CHECK(cfg.epsilon01() == doctest::Approx(80.0 / 255.0));
}
