#pragma once

#include <optional>

#include "befb/attacks.hpp"
#include "befb/data.hpp"
#include "befb/net.hpp"

namespace befb {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdversarialTrainConfig {
  AttackConfig attack;            // defender-side PGD, STE gradients
  double replace_fraction = 0.5;  // share of each batch replaced by AEs
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double lr_decay_factor = 1.0;     // multiplied every lr_decay_interval epochs
  std::size_t lr_decay_interval = 1;
  std::uint64_t seed = 1;
  std::optional<AdversarialTrainConfig> adversarial;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double wall_time_sec = 0.0;
};

using History = std::vector<EpochStats>;

// SGD with momentum; edge-kernel constraints re-projected after every step.
// Deterministic given (net, datasets, cfg). Throws TrainError naming the
// batch index if the loss goes non-finite.
History train(Network& net, const Dataset& train_ds, const Dataset& test_ds,
              const TrainConfig& cfg);

// train() with cfg.adversarial required: a fraction of every batch is
// replaced by PGD examples generated against the current parameters.
History adversarial_train(Network& net, const Dataset& train_ds,
                          const Dataset& test_ds, const TrainConfig& cfg);

struct AttackResult {
  AttackConfig config;
  double accuracy = 0.0;
};

struct EvalReport {
  std::string model;
  std::string dataset;
  double clean_accuracy = 0.0;
  std::vector<AttackResult> robust;
  std::vector<std::size_t> per_class_correct;
  std::vector<std::size_t> per_class_total;
  std::uint64_t seed = 0;
  double wall_time_sec = 0.0;
};

// Clean accuracy plus robust accuracy per attack config. Attack generation
// is seeded by `seed` for reproducibility; the network is not mutated.
EvalReport evaluate(const Network& net, const Dataset& ds,
                    const std::vector<AttackConfig>& attacks,
                    std::uint64_t seed = 0, std::size_t batch_size = 64);

double accuracy(const Network& net, const Dataset& ds,
                std::size_t batch_size = 64);

struct FeatureDiff {
  double texture_rmse = 0.0;       // over the flattened backbone features
  std::size_t binary_diff_pixels = 0;  // differing entries in the binary map
};

// Requires a BEFB-integrated network.
FeatureDiff feature_diff_metrics(const Network& net, const Tensor& x_clean,
                                 const Tensor& x_adv);

void write_history_csv(const History& history, const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);

}  // namespace befb
