#include "befb/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace befb {

Tensor Tensor::reshaped(std::size_t n_, std::size_t c_, std::size_t h_,
                        std::size_t w_) const {
  if (n_ * c_ * h_ * w_ != size()) {
    throw ShapeError("reshape " + shape_str() + " to incompatible element count");
  }
  Tensor out;
  out.shape = {n_, c_, h_, w_};
  out.data = data;
  return out;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(shape[0]) + "," + std::to_string(shape[1]) + "," +
         std::to_string(shape[2]) + "," + std::to_string(shape[3]) + "]";
}

static std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t pad,
                                std::size_t stride) {
  std::size_t padded = in + 2 * pad;
  if (padded < k) return 0;
  return (padded - k) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels,
              const std::vector<double>* bias, const ConvSpec& spec) {
  const std::size_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
  const std::size_t O = kernels.n(), k = kernels.h();
  if (kernels.c() != C) {
    throw ShapeError("conv2d: kernel shape " + kernels.shape_str() +
                     " does not match input shape " + input.shape_str());
  }
  if (kernels.w() != k) {
    throw ShapeError("conv2d: non-square kernel " + kernels.shape_str());
  }
  if (bias && bias->size() != O) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias->size()) +
                     " does not match output channels " + std::to_string(O));
  }
  const std::size_t Ho = conv_out_dim(H, k, spec.padding, spec.stride);
  const std::size_t Wo = conv_out_dim(W, k, spec.padding, spec.stride);
  if (Ho < 1 || Wo < 1) {
    throw ShapeError("conv2d: output dims collapse for input " +
                     input.shape_str() + " with kernel " + kernels.shape_str());
  }
  Tensor out(N, O, Ho, Wo);
  const long p = static_cast<long>(spec.padding);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      const double b = bias ? (*bias)[o] : 0.0;
      for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double acc = b;
          for (std::size_t c = 0; c < C; ++c) {
            const double* in_plane = &input.data[(n * C + c) * H * W];
            const double* ker = &kernels.data[((o * C + c) * k) * k];
            for (std::size_t kh = 0; kh < k; ++kh) {
              const long ih = static_cast<long>(oh * spec.stride + kh) - p;
              if (ih < 0 || ih >= static_cast<long>(H)) continue;
              const double* in_row = in_plane + ih * static_cast<long>(W);
              const double* ker_row = ker + kh * k;
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long iw = static_cast<long>(ow * spec.stride + kw) - p;
                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                acc += in_row[iw] * ker_row[kw];
              }
            }
          }
          out.at(n, o, oh, ow) = acc;
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernels,
                      const ConvSpec& spec, const Tensor& grad_out,
                      bool want_param_grads) {
  const std::size_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
  const std::size_t O = kernels.n(), k = kernels.h();
  const std::size_t Ho = grad_out.h(), Wo = grad_out.w();
  ConvGrads g;
  g.input = Tensor(N, C, H, W);
  if (want_param_grads) {
    g.kernels = Tensor(O, C, k, k);
    g.bias.assign(O, 0.0);
  }
  const long p = static_cast<long>(spec.padding);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          const double go = grad_out.at(n, o, oh, ow);
          if (want_param_grads) g.bias[o] += go;
          for (std::size_t c = 0; c < C; ++c) {
            double* gin_plane = &g.input.data[(n * C + c) * H * W];
            const double* in_plane = &input.data[(n * C + c) * H * W];
            const double* ker = &kernels.data[((o * C + c) * k) * k];
            double* gker = want_param_grads
                               ? &g.kernels.data[((o * C + c) * k) * k]
                               : nullptr;
            for (std::size_t kh = 0; kh < k; ++kh) {
              const long ih = static_cast<long>(oh * spec.stride + kh) - p;
              if (ih < 0 || ih >= static_cast<long>(H)) continue;
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long iw = static_cast<long>(ow * spec.stride + kw) - p;
                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                gin_plane[ih * static_cast<long>(W) + iw] +=
                    go * ker[kh * k + kw];
                if (gker) {
                  gker[kh * k + kw] +=
                      go * in_plane[ih * static_cast<long>(W) + iw];
                }
              }
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_grad(const Tensor& input, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!(input.data[i] > 0.0)) g.data[i] = 0.0;
  }
  return g;
}

Tensor maxpool2(const Tensor& input) {
  const std::size_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("maxpool2: odd spatial dims in " + input.shape_str());
  }
  Tensor out(N, C, H / 2, W / 2);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < H / 2; ++oh)
        for (std::size_t ow = 0; ow < W / 2; ++ow) {
          double m = input.at(n, c, 2 * oh, 2 * ow);
          m = std::max(m, input.at(n, c, 2 * oh, 2 * ow + 1));
          m = std::max(m, input.at(n, c, 2 * oh + 1, 2 * ow));
          m = std::max(m, input.at(n, c, 2 * oh + 1, 2 * ow + 1));
          out.at(n, c, oh, ow) = m;
        }
  return out;
}

Tensor maxpool2_grad(const Tensor& input, const Tensor& grad_out) {
  const std::size_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
  Tensor g(N, C, H, W);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < H / 2; ++oh)
        for (std::size_t ow = 0; ow < W / 2; ++ow) {
          // row-major scan; strict > keeps the first max on ties
          std::size_t bh = 2 * oh, bw = 2 * ow;
          double best = input.at(n, c, bh, bw);
          for (std::size_t dh = 0; dh < 2; ++dh)
            for (std::size_t dw = 0; dw < 2; ++dw) {
              const double v = input.at(n, c, 2 * oh + dh, 2 * ow + dw);
              if (v > best) {
                best = v;
                bh = 2 * oh + dh;
                bw = 2 * ow + dw;
              }
            }
          g.at(n, c, bh, bw) += grad_out.at(n, c, oh, ow);
        }
  return g;
}

Tensor dense(const Tensor& input, const Tensor& weights,
             const std::vector<double>& bias) {
  const std::size_t N = input.n(), D = input.c();
  const std::size_t M = weights.c();
  if (weights.n() != D || input.h() != 1 || input.w() != 1) {
    throw ShapeError("dense: input " + input.shape_str() +
                     " does not match weights " + weights.shape_str());
  }
  if (bias.size() != M) {
    throw ShapeError("dense: bias length " + std::to_string(bias.size()) +
                     " does not match output width " + std::to_string(M));
  }
  Tensor out(N, M, 1, 1);
  for (std::size_t n = 0; n < N; ++n) {
    double* out_row = &out.data[n * M];
    for (std::size_t m = 0; m < M; ++m) out_row[m] = bias[m];
    const double* in_row = &input.data[n * D];
    for (std::size_t d = 0; d < D; ++d) {
      const double x = in_row[d];
      if (x == 0.0) continue;
      const double* w_row = &weights.data[d * M];
      for (std::size_t m = 0; m < M; ++m) out_row[m] += x * w_row[m];
    }
  }
  return out;
}

DenseGrads dense_grad(const Tensor& input, const Tensor& weights,
                      const Tensor& grad_out, bool want_param_grads) {
  const std::size_t N = input.n(), D = input.c(), M = weights.c();
  DenseGrads g;
  g.input = Tensor(N, D, 1, 1);
  if (want_param_grads) {
    g.weights = Tensor(D, M, 1, 1);
    g.bias.assign(M, 0.0);
  }
  for (std::size_t n = 0; n < N; ++n) {
    const double* go_row = &grad_out.data[n * M];
    const double* in_row = &input.data[n * D];
    double* gin_row = &g.input.data[n * D];
    if (want_param_grads) {
      for (std::size_t m = 0; m < M; ++m) g.bias[m] += go_row[m];
    }
    for (std::size_t d = 0; d < D; ++d) {
      const double* w_row = &weights.data[d * M];
      double acc = 0.0;
      for (std::size_t m = 0; m < M; ++m) acc += go_row[m] * w_row[m];
      gin_row[d] = acc;
      if (want_param_grads) {
        double* gw_row = &g.weights.data[d * M];
        const double x = in_row[d];
        for (std::size_t m = 0; m < M; ++m) gw_row[m] += x * go_row[m];
      }
    }
  }
  return g;
}

std::pair<double, Tensor> softmax_cross_entropy(
    const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t N = logits.n(), K = logits.c();
  if (labels.size() != N) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(N));
  }
  Tensor grad(N, K, 1, 1);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= K) {
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(label) + " outside [0," +
                              std::to_string(K) + ")");
    }
    const double* row = &logits.data[n * K];
    double mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
    const double log_sum = std::log(sum);
    loss += log_sum - (row[label] - mx);
    double* grow = &grad.data[n * K];
    for (std::size_t k = 0; k < K; ++k) {
      grow[k] = std::exp(row[k] - mx) / sum / static_cast<double>(N);
    }
    grow[label] -= 1.0 / static_cast<double>(N);
  }
  return {loss / static_cast<double>(N), grad};
}

Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double h) {
  Tensor g(x.n(), x.c(), x.h(), x.w());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data[i];
    probe.data[i] = orig + h;
    const double fp = f(probe);
    probe.data[i] = orig - h;
    const double fm = f(probe);
    probe.data[i] = orig;
    g.data[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace befb
