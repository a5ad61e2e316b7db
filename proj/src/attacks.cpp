#include "befb/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace befb {

std::string attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::gaussian: return "gaussian";
  }
  throw std::invalid_argument("unknown attack kind");
}

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "gaussian") return AttackKind::gaussian;
  throw std::invalid_argument("unknown attack kind: " + name);
}

std::string AttackConfig::label() const {
  std::ostringstream os;
  os << attack_kind_name(kind);
  if (kind == AttackKind::gaussian) {
    os << " sigma=" << sigma;
  } else {
    os << " eps=" << epsilon;
    if (kind == AttackKind::pgd) {
      os << " steps=" << steps << " stepsize=" << stepsize;
    }
    os << " grad=" << grad_mode_name(grad_mode);
  }
  return os.str();
}

static double sign0(double v) {
  if (v > 0.0) return 1.0;
  if (v < 0.0) return -1.0;
  return 0.0;
}

Tensor fgsm(const Network& net, const Tensor& x, const std::vector<int>& labels,
            const AttackConfig& cfg) {
  const double eps = cfg.epsilon01();
  Tensor grad = net.input_gradient(x, labels, cfg.grad_mode);
  Tensor adv = x;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    adv.data[i] =
        std::clamp(adv.data[i] + eps * sign0(grad.data[i]), 0.0, 1.0);
  }
  return adv;
}

Tensor pgd(const Network& net, const Tensor& x, const std::vector<int>& labels,
           const AttackConfig& cfg, std::mt19937_64& rng,
           const std::function<void(const Tensor&)>* step_observer) {
  const double eps = cfg.epsilon01();
  const double alpha = cfg.stepsize01();
  Tensor adv = x;
  if (cfg.random_init && eps > 0.0) {
    std::uniform_real_distribution<double> dist(-eps, eps);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      adv.data[i] = std::clamp(adv.data[i] + dist(rng), 0.0, 1.0);
    }
  }
  if (step_observer) (*step_observer)(adv);
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor grad = net.input_gradient(adv, labels, cfg.grad_mode);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      double v = adv.data[i] + alpha * sign0(grad.data[i]);
      v = std::clamp(v, x.data[i] - eps, x.data[i] + eps);
      adv.data[i] = std::clamp(v, 0.0, 1.0);
    }
    if (step_observer) (*step_observer)(adv);
  }
  return adv;
}

Tensor gaussian_perturb(const Tensor& x, const AttackConfig& cfg,
                        std::mt19937_64& rng) {
  if (cfg.sigma < 0.0) {
    throw std::invalid_argument("gaussian sigma must be non-negative, got " +
                                std::to_string(cfg.sigma));
  }
  Tensor noisy = x;
  if (cfg.sigma == 0.0) {
    if (cfg.mean != 0.0) {
      for (double& v : noisy.data) v = std::clamp(v + cfg.mean, 0.0, 1.0);
    }
    return noisy;
  }
  std::normal_distribution<double> dist(cfg.mean, cfg.sigma);
  for (double& v : noisy.data) {
    v = std::clamp(v + dist(rng), 0.0, 1.0);
  }
  return noisy;
}

Tensor run_attack(const Network& net, const Tensor& x,
                  const std::vector<int>& labels, const AttackConfig& cfg,
                  std::mt19937_64& rng) {
  switch (cfg.kind) {
    case AttackKind::fgsm: return fgsm(net, x, labels, cfg);
    case AttackKind::pgd: return pgd(net, x, labels, cfg, rng);
    case AttackKind::gaussian: return gaussian_perturb(x, cfg, rng);
  }
  throw std::invalid_argument("unknown attack kind");
}

}  // namespace befb
