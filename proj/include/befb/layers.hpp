#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "befb/edge.hpp"
#include "befb/tensor.hpp"

namespace befb {

// Per-call activation record. Slots are layer-defined.
struct Cache {
  std::vector<Tensor> t;
  std::vector<std::array<std::size_t, 4>> shapes;
};

struct ParamRef {
  std::string name;
  Tensor* value;
};

using ParamGrads = std::map<std::string, Tensor>;

struct BackwardOpts {
  GradMode threshold_mode = GradMode::ste;
  bool sigmoid_decreasing = false;
  bool want_param_grads = true;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x, Cache& cache) const = 0;
  virtual Tensor backward(const Tensor& grad_out, const Cache& cache,
                          const std::string& prefix, ParamGrads* grads,
                          const BackwardOpts& opts) const = 0;
  virtual void collect_params(const std::string& prefix,
                              std::vector<ParamRef>& out) {}
  // Constraint enforcement hook; no-op for unconstrained layers.
  virtual void project() {}
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class ConvLayer : public Layer {
 public:
  ConvLayer(Tensor kernels, Tensor bias, ConvSpec spec);
  std::string kind() const override { return "conv"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override;

  Tensor kernels;        // [O,C,k,k]
  Tensor bias;           // [1,O,1,1]
  ConvSpec spec;
};

class ReluLayer : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  std::unique_ptr<Layer> clone() const override;
};

class MaxPoolLayer : public Layer {
 public:
  std::string kind() const override { return "maxpool"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  std::unique_ptr<Layer> clone() const override;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(Tensor weights, Tensor bias);
  std::string kind() const override { return "dense"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override;

  Tensor weights;        // [D,M,1,1]
  Tensor bias;           // [1,M,1,1]
};

class FlattenLayer : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  std::unique_ptr<Layer> clone() const override;
};

// Channel mean; keeps the 3x3 edge detectors single-channel.
class GrayscaleLayer : public Layer {
 public:
  std::string kind() const override { return "grayscale"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  std::unique_ptr<Layer> clone() const override;
};

enum class SobelMode { single, multiple };

// One constrained-kernel convolution (single) or four parallel ones with
// additive fusion (multiple). Stride 1, padding 1, no bias, single channel.
class SobelLayer : public Layer {
 public:
  SobelLayer(SobelMode mode, std::mt19937_64& rng);
  std::string kind() const override { return "sobel"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  void project() override;
  std::unique_ptr<Layer> clone() const override;

  bool feasible() const;

  SobelMode mode;
  std::vector<EdgeKind> kinds;
  std::vector<Tensor> kernels;  // each [1,1,3,3], parallel to kinds
};

// Binarization at t * max(channel); backward mode chosen per call.
class ThresholdLayer : public Layer {
 public:
  explicit ThresholdLayer(double t);
  std::string kind() const override { return "threshold"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  std::unique_ptr<Layer> clone() const override;

  double t;
};

// Two 3x3 convs with identity skip; 1x1 projection when widths change.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels,
                std::mt19937_64& rng);
  std::string kind() const override { return "residual-block"; }
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string& prefix, ParamGrads* grads,
                  const BackwardOpts& opts) const override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override;

  std::unique_ptr<ConvLayer> conv1, conv2;
  std::unique_ptr<ConvLayer> projection;  // null when widths match

 private:
  ResidualBlock() = default;
};

// He-style fan-in scaled normal init for an [O,C,k,k] kernel tensor.
Tensor he_init_kernels(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                       std::mt19937_64& rng);
Tensor he_init_dense(std::size_t in_dim, std::size_t out_dim,
                     std::mt19937_64& rng);

// grayscale -> l Sobel layers -> threshold -> flatten.
std::vector<std::unique_ptr<Layer>> build_befb_branch(std::size_t l, double t,
                                                      SobelMode mode,
                                                      std::mt19937_64& rng);

}  // namespace befb
