#pragma once

#include <map>
#include <string>
#include <vector>

#include "befb/attacks.hpp"
#include "befb/backbones.hpp"
#include "befb/train.hpp"

namespace befb {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` document, `#` comments, unknown keys rejected.
struct RunConfig {
  // dataset
  std::string dataset;  // mnist | cifar10 | shapes
  std::string mnist_train_images, mnist_train_labels;
  std::string mnist_test_images, mnist_test_labels;
  std::vector<std::string> cifar_train_batches, cifar_test_batches;
  std::size_t n_train = 0, n_test = 0;  // 0 = all (shapes: 300/90)
  std::uint64_t subset_seed = 0;
  bool stratified = true;
  std::size_t shapes_size = 28;

  // model
  BackboneFamily family = BackboneFamily::vgg_small;
  std::vector<std::size_t> widths = {4, 8};
  std::size_t head_width = 64;
  std::string befb = "off";  // off | single | multiple
  std::size_t sobel_layers = 2;
  double threshold_t = 0.8;
  BranchVariant branch_variant = BranchVariant::full;

  // training
  TrainConfig training;
  bool adversarial = false;
  double at_replace_fraction = 0.5;
  AttackConfig at_attack;  // pgd

  // evaluation
  std::vector<AttackConfig> attacks;
  std::uint64_t eval_seed = 0;

  std::string output_dir;

  // fully resolved key -> value map, including defaults
  std::map<std::string, std::string> resolved;
};

RunConfig parse_run_config(const std::string& path);

// Parses one attack spec like "pgd eps=80 steps=8 stepsize=20 grad=zero".
AttackConfig parse_attack_spec(const std::string& spec);

// Loads the configured dataset and applies subsetting.
std::pair<Dataset, Dataset> load_configured_datasets(const RunConfig& cfg);

// Builds the configured (possibly BEFB-integrated) model.
Network build_configured_model(const RunConfig& cfg,
                               const std::array<std::size_t, 3>& input_shape,
                               std::size_t classes, std::uint64_t seed);

void write_resolved_config(const RunConfig& cfg, const std::string& path);

}  // namespace befb
