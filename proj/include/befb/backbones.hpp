#pragma once

#include <random>

#include "befb/net.hpp"

namespace befb {

enum class BackboneFamily { vgg_small, resnet_small };

struct BackboneConfig {
  BackboneFamily family = BackboneFamily::vgg_small;
  std::vector<std::size_t> widths;  // channel count per stage
  std::size_t head_width = 64;
};

// Ablation variants: full branch, threshold layer removed (raw Sobel output
// feeds the head), Sobel layers removed (threshold applied to the grayscale
// input directly).
enum class BranchVariant { full, tlre, slre };

struct BranchParams {
  std::size_t sobel_layers = 2;
  double t = 0.8;
  SobelMode mode = SobelMode::multiple;
  BranchVariant variant = BranchVariant::full;
};

// Stages of [conv3x3 -> relu -> conv3x3 -> relu -> maxpool2], then a
// two-dense head with one ReLU between.
Network build_small_vgg(const BackboneConfig& cfg,
                        const std::array<std::size_t, 3>& input_shape,
                        std::size_t classes, std::mt19937_64& rng);

// Stem conv + one residual block per stage, maxpool2 between stages.
Network build_small_resnet(const BackboneConfig& cfg,
                           const std::array<std::size_t, 3>& input_shape,
                           std::size_t classes, std::mt19937_64& rng);

// Attaches a BEFB branch to a branch-free backbone network and rebuilds the
// head to consume the concatenated feature width.
Network build_integrated(const Network& backbone, const BranchParams& params,
                         std::mt19937_64& rng);

std::string family_name(BackboneFamily family);
BackboneFamily family_from_name(const std::string& name);

}  // namespace befb
