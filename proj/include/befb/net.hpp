#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "befb/layers.hpp"

namespace befb {

struct NetCache {
  std::vector<Cache> backbone, branch, head;
  Tensor backbone_flat;   // flattened texture features
  Tensor branch_flat;     // flattened binary edge features (empty if no branch)
  std::array<std::size_t, 4> backbone_shape{};  // pre-flatten
  bool valid = false;
};

// Two-branch layer graph: backbone and optional BEFB branch evaluated on the
// same input, flattened outputs concatenated (backbone first), fed to a
// dense head.
class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  std::vector<std::unique_ptr<Layer>> backbone;
  std::vector<std::unique_ptr<Layer>> branch;  // empty when absent
  std::vector<std::unique_ptr<Layer>> head;
  std::array<std::size_t, 3> input_shape{};    // (C,H,W)
  std::size_t class_count = 0;
  std::string name;                            // e.g. "vgg_small-BEFB-multiple"
  std::map<std::string, std::string> descriptor;

  bool has_branch() const { return !branch.empty(); }

  Tensor forward(const Tensor& batch, NetCache* cache = nullptr) const;

  // Gradients for every registered parameter; optionally also the gradient
  // wrt the input (backbone and branch contributions summed).
  ParamGrads backward(const NetCache& cache, const Tensor& grad_logits,
                      const BackwardOpts& opts,
                      Tensor* grad_input = nullptr) const;

  // d(loss)/d(input) with the threshold layer's backward in `mode`.
  Tensor input_gradient(const Tensor& x, const std::vector<int>& labels,
                        GradMode mode, bool sigmoid_decreasing = false) const;

  std::vector<ParamRef> params();
  std::size_t param_count();

  // Clamp all edge kernels back into their constraint sets.
  void project_constraints();

  // Every SobelLayer satisfies its sign-pattern constraints exactly.
  bool constraints_satisfied() const;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

// Rebuilds a network skeleton from a checkpoint's architecture descriptor.
// Defined with the backbone builders.
Network build_from_descriptor(const std::map<std::string, std::string>& desc);

}  // namespace befb
