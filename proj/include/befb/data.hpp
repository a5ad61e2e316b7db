#pragma once

#include <string>
#include <vector>

#include "befb/tensor.hpp"

namespace befb {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Tensor images;            // [N,C,H,W] in [0,1]
  std::vector<int> labels;  // in [0, class_count)
  int class_count = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }

  // Copies of sample i as a batch of one.
  Tensor image(std::size_t i) const;
  Tensor batch(const std::vector<std::size_t>& indices) const;
  std::vector<int> batch_labels(const std::vector<std::size_t>& indices) const;
};

// MNIST IDX pair; big-endian, image magic 0x803, label magic 0x801,
// pixels scaled by exactly 1/255.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, 1 label byte + RGB planes.
Dataset load_cifar10_bin(const std::vector<std::string>& batch_paths);

// Disjoint train/test subsets, deterministic given seed. Stratified sampling
// keeps per-class counts within +-1 of n/K.
std::pair<Dataset, Dataset> subset(const Dataset& ds, std::size_t n_train,
                                   std::size_t n_test, std::uint64_t seed,
                                   bool stratified);

// Filled rectangles, discs, and triangles (3 balanced classes) with random
// position/scale and light texture noise.
Dataset synthetic_shapes(std::size_t n, std::size_t size, std::uint64_t seed);

}  // namespace befb
