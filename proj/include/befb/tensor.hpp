#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace befb {

// Dense 4-D array in (batch, channel, height, width) order, row-major.
struct Tensor {
  std::array<std::size_t, 4> shape{0, 0, 0, 0};
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
         double fill = 0.0)
      : shape{n, c, h, w}, data(n * c * h * w, fill) {}

  std::size_t n() const { return shape[0]; }
  std::size_t c() const { return shape[1]; }
  std::size_t h() const { return shape[2]; }
  std::size_t w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }

  double& at(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_) {
    return data[((n_ * shape[1] + c_) * shape[2] + h_) * shape[3] + w_];
  }
  double at(std::size_t n_, std::size_t c_, std::size_t h_,
            std::size_t w_) const {
    return data[((n_ * shape[1] + c_) * shape[2] + h_) * shape[3] + w_];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // Same data, new shape; element count must match.
  Tensor reshaped(std::size_t n_, std::size_t c_, std::size_t h_,
                  std::size_t w_) const;

  // [N, C*H*W, 1, 1] view copy.
  Tensor flattened() const { return reshaped(n(), c() * h() * w(), 1, 1); }

  std::string shape_str() const;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation (no kernel flip), symmetric zero padding.
// input [N,C,H,W], kernels [O,C,k,k], bias nullptr or length O.
Tensor conv2d(const Tensor& input, const Tensor& kernels,
              const std::vector<double>* bias, const ConvSpec& spec);

struct ConvGrads {
  Tensor input;
  Tensor kernels;
  std::vector<double> bias;
};

// grad_kernels/grad_bias are skipped when want_param_grads is false.
ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernels,
                      const ConvSpec& spec, const Tensor& grad_out,
                      bool want_param_grads = true);

Tensor relu(const Tensor& input);
// Passes gradient where input > 0; an input of exactly 0 passes 0.
Tensor relu_grad(const Tensor& input, const Tensor& grad_out);

// 2x2 non-overlapping max pool; H and W must be even.
Tensor maxpool2(const Tensor& input);
// Gradient goes to the argmax; first position in row-major order on ties.
Tensor maxpool2_grad(const Tensor& input, const Tensor& grad_out);

// input [N,D,1,1], weights [D,M,1,1], bias length M -> [N,M,1,1].
Tensor dense(const Tensor& input, const Tensor& weights,
             const std::vector<double>& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  std::vector<double> bias;
};

DenseGrads dense_grad(const Tensor& input, const Tensor& weights,
                      const Tensor& grad_out, bool want_param_grads = true);

// Mean cross-entropy over the batch with max-subtracted softmax.
// grad = (softmax - one_hot) / N.
std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels);

// Central differences, (f(x+h e) - f(x-h e)) / 2h per element.
Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double h);

}  // namespace befb
