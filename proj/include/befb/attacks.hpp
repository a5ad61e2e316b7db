#pragma once

#include <functional>
#include <random>

#include "befb/net.hpp"

namespace befb {

enum class AttackKind { fgsm, pgd, gaussian };

std::string attack_kind_name(AttackKind kind);
AttackKind attack_kind_from_name(const std::string& name);

// epsilon and stepsize are in 0-255 pixel units and converted to the
// internal [0,1] scale at the point of use; sigma and mean are already on
// the [0,1] scale.
struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double epsilon = 0.0;
  int steps = 1;
  double stepsize = 0.0;
  GradMode grad_mode = GradMode::zero;
  bool random_init = true;
  double sigma = 0.0;
  double mean = 0.0;

  double epsilon01() const { return epsilon / 255.0; }
  double stepsize01() const { return stepsize / 255.0; }
  std::string label() const;
};

// x_adv = clip01(x + eps * sign(grad)), sign(0) = 0.
Tensor fgsm(const Network& net, const Tensor& x, const std::vector<int>& labels,
            const AttackConfig& cfg);

// Iterated sign steps projected to the eps-ball around x intersected with
// [0,1]; optional uniform random start inside the ball. step_observer, when
// set, sees every iterate.
Tensor pgd(const Network& net, const Tensor& x, const std::vector<int>& labels,
           const AttackConfig& cfg, std::mt19937_64& rng,
           const std::function<void(const Tensor&)>* step_observer = nullptr);

// x + N(mean, sigma^2) i.i.d., clipped to [0,1].
Tensor gaussian_perturb(const Tensor& x, const AttackConfig& cfg,
                        std::mt19937_64& rng);

// Dispatch on cfg.kind.
Tensor run_attack(const Network& net, const Tensor& x,
                  const std::vector<int>& labels, const AttackConfig& cfg,
                  std::mt19937_64& rng);

}  // namespace befb
