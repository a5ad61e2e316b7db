#pragma once

#include <array>
#include <random>
#include <string>

#include "befb/tensor.hpp"

namespace befb {

enum class EdgeKind { horizontal, vertical, pos_diagonal, neg_diagonal };

std::string edge_kind_name(EdgeKind kind);
EdgeKind edge_kind_from_name(const std::string& name);

// 3x3 constrained edge detector. Each position is either bounded in [0,1],
// pinned to exactly 0, or bounded in [-1,0], depending on the kind.
struct EdgeKernel {
  EdgeKind kind = EdgeKind::horizontal;
  std::array<double, 9> w{};
};

// Per-position constraint category: +1 -> [0,1], 0 -> exactly 0, -1 -> [-1,0].
const std::array<int, 9>& edge_pattern(EdgeKind kind);

// Classic Sobel values scaled into the bounds: 1.0 at the pattern center,
// 0.5 at its neighbours, mirrored on the negative side, zeros elsewhere.
EdgeKernel default_edge_kernel(EdgeKind kind);

// Default kernel plus uniform jitter in [-0.05, 0.05], clamped into bounds.
EdgeKernel init_edge_kernel(EdgeKind kind, std::mt19937_64& rng);

// Clamp every weight into its interval; zero positions become exactly 0.
// Idempotent, identity on feasible kernels.
void project_edge_kernel(EdgeKernel& k);
void project_edge_weights(EdgeKind kind, double* w9);

bool edge_kernel_feasible(const EdgeKernel& k);
bool edge_weights_feasible(EdgeKind kind, const double* w9);

// Per-channel binarization: out = 1 where x >= t * max(channel), else 0.
// Channels whose max is <= 0 emit all zeros.
Tensor threshold_forward(const Tensor& x, double t);

// Per-(sample, channel) threshold values t * max(channel), shape [N,C,1,1].
Tensor threshold_levels(const Tensor& x, double t);

enum class GradMode { ste, zero, sigmoid };

std::string grad_mode_name(GradMode mode);
GradMode grad_mode_from_name(const std::string& name);

// Surrogate backward through the binarization. `x` and `levels` are the
// cached pre-activation and per-channel thresholds from the forward pass.
// sigmoid mode uses the increasing sigmoid centered at the threshold;
// `sigmoid_decreasing` flips the derivative sign to match the decreasing
// orientation written in some formulations.
Tensor threshold_backward(const Tensor& grad_out, const Tensor& x,
                          const Tensor& levels, GradMode mode,
                          bool sigmoid_decreasing = false);

}  // namespace befb
