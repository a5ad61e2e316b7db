#include "befb/layers.hpp"

#include <cmath>

namespace befb {

static Tensor bias_to_vec_tensor(std::size_t m) { return Tensor(1, m, 1, 1); }

static std::vector<double> bias_vec(const Tensor& bias) {
  return bias.data;
}

// ---- ConvLayer ----

ConvLayer::ConvLayer(Tensor kernels_, Tensor bias_, ConvSpec spec_)
    : kernels(std::move(kernels_)), bias(std::move(bias_)), spec(spec_) {
  if (bias.c() != kernels.n()) {
    throw ShapeError("conv layer: bias " + bias.shape_str() +
                     " does not match kernels " + kernels.shape_str());
  }
}

Tensor ConvLayer::forward(const Tensor& x, Cache& cache) const {
  cache.t.push_back(x);
  const std::vector<double> b = bias_vec(bias);
  return conv2d(x, kernels, &b, spec);
}

Tensor ConvLayer::backward(const Tensor& grad_out, const Cache& cache,
                           const std::string& prefix, ParamGrads* grads,
                           const BackwardOpts& opts) const {
  const Tensor& input = cache.t.at(0);
  ConvGrads g = conv2d_grad(input, kernels, spec, grad_out,
                            grads && opts.want_param_grads);
  if (grads && opts.want_param_grads) {
    (*grads)[prefix + "kernels"] = std::move(g.kernels);
    Tensor gb = bias_to_vec_tensor(bias.c());
    gb.data = std::move(g.bias);
    (*grads)[prefix + "bias"] = std::move(gb);
  }
  return std::move(g.input);
}

void ConvLayer::collect_params(const std::string& prefix,
                               std::vector<ParamRef>& out) {
  out.push_back({prefix + "kernels", &kernels});
  out.push_back({prefix + "bias", &bias});
}

std::unique_ptr<Layer> ConvLayer::clone() const {
  return std::make_unique<ConvLayer>(kernels, bias, spec);
}

// ---- ReluLayer ----

Tensor ReluLayer::forward(const Tensor& x, Cache& cache) const {
  cache.t.push_back(x);
  return relu(x);
}

Tensor ReluLayer::backward(const Tensor& grad_out, const Cache& cache,
                           const std::string&, ParamGrads*,
                           const BackwardOpts&) const {
  return relu_grad(cache.t.at(0), grad_out);
}

std::unique_ptr<Layer> ReluLayer::clone() const {
  return std::make_unique<ReluLayer>();
}

// ---- MaxPoolLayer ----

Tensor MaxPoolLayer::forward(const Tensor& x, Cache& cache) const {
  cache.t.push_back(x);
  return maxpool2(x);
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out, const Cache& cache,
                              const std::string&, ParamGrads*,
                              const BackwardOpts&) const {
  return maxpool2_grad(cache.t.at(0), grad_out);
}

std::unique_ptr<Layer> MaxPoolLayer::clone() const {
  return std::make_unique<MaxPoolLayer>();
}

// ---- DenseLayer ----

DenseLayer::DenseLayer(Tensor weights_, Tensor bias_)
    : weights(std::move(weights_)), bias(std::move(bias_)) {
  if (bias.c() != weights.c()) {
    throw ShapeError("dense layer: bias " + bias.shape_str() +
                     " does not match weights " + weights.shape_str());
  }
}

Tensor DenseLayer::forward(const Tensor& x, Cache& cache) const {
  cache.t.push_back(x);
  return dense(x, weights, bias_vec(bias));
}

Tensor DenseLayer::backward(const Tensor& grad_out, const Cache& cache,
                            const std::string& prefix, ParamGrads* grads,
                            const BackwardOpts& opts) const {
  DenseGrads g = dense_grad(cache.t.at(0), weights, grad_out,
                            grads && opts.want_param_grads);
  if (grads && opts.want_param_grads) {
    (*grads)[prefix + "weights"] = std::move(g.weights);
    Tensor gb = bias_to_vec_tensor(bias.c());
    gb.data = std::move(g.bias);
    (*grads)[prefix + "bias"] = std::move(gb);
  }
  return std::move(g.input);
}

void DenseLayer::collect_params(const std::string& prefix,
                                std::vector<ParamRef>& out) {
  out.push_back({prefix + "weights", &weights});
  out.push_back({prefix + "bias", &bias});
}

std::unique_ptr<Layer> DenseLayer::clone() const {
  return std::make_unique<DenseLayer>(weights, bias);
}

// ---- FlattenLayer ----

Tensor FlattenLayer::forward(const Tensor& x, Cache& cache) const {
  cache.shapes.push_back(x.shape);
  return x.flattened();
}

Tensor FlattenLayer::backward(const Tensor& grad_out, const Cache& cache,
                              const std::string&, ParamGrads*,
                              const BackwardOpts&) const {
  const auto& s = cache.shapes.at(0);
  return grad_out.reshaped(s[0], s[1], s[2], s[3]);
}

std::unique_ptr<Layer> FlattenLayer::clone() const {
  return std::make_unique<FlattenLayer>();
}

// ---- GrayscaleLayer ----

Tensor GrayscaleLayer::forward(const Tensor& x, Cache& cache) const {
  cache.shapes.push_back(x.shape);
  const std::size_t N = x.n(), C = x.c(), plane = x.h() * x.w();
  Tensor out(N, 1, x.h(), x.w());
  for (std::size_t n = 0; n < N; ++n) {
    double* o = &out.data[n * plane];
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = &x.data[(n * C + c) * plane];
      for (std::size_t i = 0; i < plane; ++i) o[i] += p[i];
    }
    for (std::size_t i = 0; i < plane; ++i) o[i] /= static_cast<double>(C);
  }
  return out;
}

Tensor GrayscaleLayer::backward(const Tensor& grad_out, const Cache& cache,
                                const std::string&, ParamGrads*,
                                const BackwardOpts&) const {
  const auto& s = cache.shapes.at(0);
  const std::size_t N = s[0], C = s[1], plane = s[2] * s[3];
  Tensor g(N, C, s[2], s[3]);
  for (std::size_t n = 0; n < N; ++n) {
    const double* go = &grad_out.data[n * plane];
    for (std::size_t c = 0; c < C; ++c) {
      double* p = &g.data[(n * C + c) * plane];
      for (std::size_t i = 0; i < plane; ++i)
        p[i] = go[i] / static_cast<double>(C);
    }
  }
  return g;
}

std::unique_ptr<Layer> GrayscaleLayer::clone() const {
  return std::make_unique<GrayscaleLayer>();
}

// ---- SobelLayer ----

static Tensor edge_kernel_tensor(const EdgeKernel& k) {
  Tensor t(1, 1, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) t.data[i] = k.w[i];
  return t;
}

SobelLayer::SobelLayer(SobelMode mode_, std::mt19937_64& rng) : mode(mode_) {
  if (mode == SobelMode::single) {
    kinds = {EdgeKind::horizontal};
  } else {
    kinds = {EdgeKind::horizontal, EdgeKind::vertical, EdgeKind::pos_diagonal,
             EdgeKind::neg_diagonal};
  }
  for (EdgeKind k : kinds) {
    kernels.push_back(edge_kernel_tensor(init_edge_kernel(k, rng)));
  }
}

Tensor SobelLayer::forward(const Tensor& x, Cache& cache) const {
  if (x.c() != 1) {
    throw ShapeError("sobel layer expects single-channel input, got " +
                     x.shape_str());
  }
  cache.t.push_back(x);
  const ConvSpec spec{1, 1};
  Tensor out = conv2d(x, kernels[0], nullptr, spec);
  for (std::size_t i = 1; i < kernels.size(); ++i) {
    Tensor part = conv2d(x, kernels[i], nullptr, spec);
    for (std::size_t j = 0; j < out.size(); ++j) out.data[j] += part.data[j];
  }
  return out;
}

Tensor SobelLayer::backward(const Tensor& grad_out, const Cache& cache,
                            const std::string& prefix, ParamGrads* grads,
                            const BackwardOpts& opts) const {
  const Tensor& input = cache.t.at(0);
  const ConvSpec spec{1, 1};
  Tensor grad_in(input.n(), input.c(), input.h(), input.w());
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    ConvGrads g = conv2d_grad(input, kernels[i], spec, grad_out,
                              grads && opts.want_param_grads);
    for (std::size_t j = 0; j < grad_in.size(); ++j)
      grad_in.data[j] += g.input.data[j];
    if (grads && opts.want_param_grads) {
      (*grads)[prefix + "k" + std::to_string(i)] = std::move(g.kernels);
    }
  }
  return grad_in;
}

void SobelLayer::collect_params(const std::string& prefix,
                                std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.push_back({prefix + "k" + std::to_string(i), &kernels[i]});
  }
}

void SobelLayer::project() {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    project_edge_weights(kinds[i], kernels[i].data.data());
  }
}

bool SobelLayer::feasible() const {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    if (!edge_weights_feasible(kinds[i], kernels[i].data.data())) return false;
  }
  return true;
}

std::unique_ptr<Layer> SobelLayer::clone() const {
  auto copy = std::make_unique<SobelLayer>(*this);
  return copy;
}

// ---- ThresholdLayer ----

ThresholdLayer::ThresholdLayer(double t_) : t(t_) {
  if (t < 0.0 || t > 1.0) {
    throw std::invalid_argument("threshold coefficient t = " +
                                std::to_string(t) + " outside [0,1]");
  }
}

Tensor ThresholdLayer::forward(const Tensor& x, Cache& cache) const {
  cache.t.push_back(x);
  cache.t.push_back(threshold_levels(x, t));
  return threshold_forward(x, t);
}

Tensor ThresholdLayer::backward(const Tensor& grad_out, const Cache& cache,
                                const std::string&, ParamGrads*,
                                const BackwardOpts& opts) const {
  return threshold_backward(grad_out, cache.t.at(0), cache.t.at(1),
                            opts.threshold_mode, opts.sigmoid_decreasing);
}

std::unique_ptr<Layer> ThresholdLayer::clone() const {
  return std::make_unique<ThresholdLayer>(t);
}

// ---- ResidualBlock ----

Tensor he_init_kernels(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                       std::mt19937_64& rng) {
  const double stddev =
      std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(out_ch, in_ch, k, k);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor he_init_dense(std::size_t in_dim, std::size_t out_dim,
                     std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(in_dim, out_dim, 1, 1);
  for (double& v : t.data) v = dist(rng);
  return t;
}

ResidualBlock::ResidualBlock(std::size_t in_channels, std::size_t out_channels,
                             std::mt19937_64& rng) {
  conv1 = std::make_unique<ConvLayer>(
      he_init_kernels(out_channels, in_channels, 3, rng),
      Tensor(1, out_channels, 1, 1), ConvSpec{1, 1});
  conv2 = std::make_unique<ConvLayer>(
      he_init_kernels(out_channels, out_channels, 3, rng),
      Tensor(1, out_channels, 1, 1), ConvSpec{1, 1});
  if (in_channels != out_channels) {
    projection = std::make_unique<ConvLayer>(
        he_init_kernels(out_channels, in_channels, 1, rng),
        Tensor(1, out_channels, 1, 1), ConvSpec{1, 0});
  }
}

Tensor ResidualBlock::forward(const Tensor& x, Cache& cache) const {
  Cache c1, c2, cp;
  Tensor a = conv1->forward(x, c1);
  Tensor r = relu(a);
  Tensor b = conv2->forward(r, c2);
  Tensor skip = projection ? projection->forward(x, cp) : x;
  Tensor sum = b;
  for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] += skip.data[i];
  // slots: conv1 input, a, conv2 input (r), sum, projection input (if any)
  cache.t.push_back(std::move(c1.t.at(0)));
  cache.t.push_back(std::move(a));
  cache.t.push_back(std::move(c2.t.at(0)));
  cache.t.push_back(sum);
  if (projection) cache.t.push_back(std::move(cp.t.at(0)));
  return relu(sum);
}

Tensor ResidualBlock::backward(const Tensor& grad_out, const Cache& cache,
                               const std::string& prefix, ParamGrads* grads,
                               const BackwardOpts& opts) const {
  const Tensor& sum = cache.t.at(3);
  Tensor grad_sum = relu_grad(sum, grad_out);

  Cache c2;
  c2.t.push_back(cache.t.at(2));
  Tensor grad_r =
      conv2->backward(grad_sum, c2, prefix + "conv2.", grads, opts);
  Tensor grad_a = relu_grad(cache.t.at(1), grad_r);
  Cache c1;
  c1.t.push_back(cache.t.at(0));
  Tensor grad_x = conv1->backward(grad_a, c1, prefix + "conv1.", grads, opts);

  if (projection) {
    Cache cp;
    cp.t.push_back(cache.t.at(4));
    Tensor grad_skip =
        projection->backward(grad_sum, cp, prefix + "proj.", grads, opts);
    for (std::size_t i = 0; i < grad_x.size(); ++i)
      grad_x.data[i] += grad_skip.data[i];
  } else {
    for (std::size_t i = 0; i < grad_x.size(); ++i)
      grad_x.data[i] += grad_sum.data[i];
  }
  return grad_x;
}

void ResidualBlock::collect_params(const std::string& prefix,
                                   std::vector<ParamRef>& out) {
  conv1->collect_params(prefix + "conv1.", out);
  conv2->collect_params(prefix + "conv2.", out);
  if (projection) projection->collect_params(prefix + "proj.", out);
}

std::unique_ptr<Layer> ResidualBlock::clone() const {
  auto copy = std::unique_ptr<ResidualBlock>(new ResidualBlock());
  copy->conv1 = std::make_unique<ConvLayer>(conv1->kernels, conv1->bias,
                                            conv1->spec);
  copy->conv2 = std::make_unique<ConvLayer>(conv2->kernels, conv2->bias,
                                            conv2->spec);
  copy->projection =
      projection ? std::make_unique<ConvLayer>(projection->kernels,
                                               projection->bias,
                                               projection->spec)
                 : nullptr;
  return copy;
}

// ---- BEFB branch ----

std::vector<std::unique_ptr<Layer>> build_befb_branch(std::size_t l, double t,
                                                      SobelMode mode,
                                                      std::mt19937_64& rng) {
  if (l < 1) {
    throw std::invalid_argument("befb branch needs at least one Sobel layer");
  }
  std::vector<std::unique_ptr<Layer>> layers;
  layers.push_back(std::make_unique<GrayscaleLayer>());
  for (std::size_t i = 0; i < l; ++i) {
    layers.push_back(std::make_unique<SobelLayer>(mode, rng));
  }
  layers.push_back(std::make_unique<ThresholdLayer>(t));
  layers.push_back(std::make_unique<FlattenLayer>());
  return layers;
}

}  // namespace befb
