#include "befb/edge.hpp"

#include <algorithm>
#include <cmath>

namespace befb {

std::string edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::horizontal: return "horizontal";
    case EdgeKind::vertical: return "vertical";
    case EdgeKind::pos_diagonal: return "pos_diagonal";
    case EdgeKind::neg_diagonal: return "neg_diagonal";
  }
  throw std::invalid_argument("unknown edge kind");
}

EdgeKind edge_kind_from_name(const std::string& name) {
  if (name == "horizontal") return EdgeKind::horizontal;
  if (name == "vertical") return EdgeKind::vertical;
  if (name == "pos_diagonal") return EdgeKind::pos_diagonal;
  if (name == "neg_diagonal") return EdgeKind::neg_diagonal;
  throw std::invalid_argument("unknown edge kind: " + name);
}

const std::array<int, 9>& edge_pattern(EdgeKind kind) {
  static const std::array<int, 9> horizontal = {1, 1, 1, 0, 0, 0, -1, -1, -1};
  static const std::array<int, 9> vertical = {1, 0, -1, 1, 0, -1, 1, 0, -1};
  static const std::array<int, 9> pos_diag = {1, 1, 0, 1, 0, -1, 0, -1, -1};
  static const std::array<int, 9> neg_diag = {0, 1, 1, -1, 0, 1, -1, -1, 0};
  switch (kind) {
    case EdgeKind::horizontal: return horizontal;
    case EdgeKind::vertical: return vertical;
    case EdgeKind::pos_diagonal: return pos_diag;
    case EdgeKind::neg_diagonal: return neg_diag;
  }
  throw std::invalid_argument("unknown edge kind");
}

EdgeKernel default_edge_kernel(EdgeKind kind) {
  EdgeKernel k;
  k.kind = kind;
  switch (kind) {
    case EdgeKind::horizontal:
      k.w = {0.5, 1.0, 0.5, 0, 0, 0, -0.5, -1.0, -0.5};
      break;
    case EdgeKind::vertical:
      k.w = {0.5, 0, -0.5, 1.0, 0, -1.0, 0.5, 0, -0.5};
      break;
    case EdgeKind::pos_diagonal:
      k.w = {1.0, 0.5, 0, 0.5, 0, -0.5, 0, -0.5, -1.0};
      break;
    case EdgeKind::neg_diagonal:
      k.w = {0, 0.5, 1.0, -0.5, 0, 0.5, -1.0, -0.5, 0};
      break;
  }
  return k;
}

EdgeKernel init_edge_kernel(EdgeKind kind, std::mt19937_64& rng) {
  EdgeKernel k = default_edge_kernel(kind);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const auto& pattern = edge_pattern(kind);
  for (std::size_t i = 0; i < 9; ++i) {
    if (pattern[i] != 0) k.w[i] += jitter(rng);
  }
  project_edge_kernel(k);
  return k;
}

void project_edge_weights(EdgeKind kind, double* w9) {
  const auto& pattern = edge_pattern(kind);
  for (std::size_t i = 0; i < 9; ++i) {
    switch (pattern[i]) {
      case 1: w9[i] = std::clamp(w9[i], 0.0, 1.0); break;
      case 0: w9[i] = 0.0; break;
      case -1: w9[i] = std::clamp(w9[i], -1.0, 0.0); break;
    }
  }
}

void project_edge_kernel(EdgeKernel& k) {
  project_edge_weights(k.kind, k.w.data());
}

bool edge_weights_feasible(EdgeKind kind, const double* w9) {
  const auto& pattern = edge_pattern(kind);
  for (std::size_t i = 0; i < 9; ++i) {
    switch (pattern[i]) {
      case 1:
        if (!(w9[i] >= 0.0 && w9[i] <= 1.0)) return false;
        break;
      case 0:
        if (w9[i] != 0.0) return false;
        break;
      case -1:
        if (!(w9[i] >= -1.0 && w9[i] <= 0.0)) return false;
        break;
    }
  }
  return true;
}

bool edge_kernel_feasible(const EdgeKernel& k) {
  return edge_weights_feasible(k.kind, k.w.data());
}

Tensor threshold_levels(const Tensor& x, double t) {
  const std::size_t N = x.n(), C = x.c(), plane = x.h() * x.w();
  Tensor levels(N, C, 1, 1);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = &x.data[(n * C + c) * plane];
      double mx = p[0];
      for (std::size_t i = 1; i < plane; ++i) mx = std::max(mx, p[i]);
      levels.at(n, c, 0, 0) = t * mx;
    }
  return levels;
}

Tensor threshold_forward(const Tensor& x, double t) {
  if (t < 0.0 || t > 1.0) {
    throw std::invalid_argument("threshold coefficient t = " +
                                std::to_string(t) + " outside [0,1]");
  }
  const std::size_t N = x.n(), C = x.c(), plane = x.h() * x.w();
  Tensor out(x.n(), x.c(), x.h(), x.w());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = &x.data[(n * C + c) * plane];
      double mx = p[0];
      for (std::size_t i = 1; i < plane; ++i) mx = std::max(mx, p[i]);
      double* o = &out.data[(n * C + c) * plane];
      if (mx <= 0.0) continue;  // flat or non-positive channel: no edges
      const double level = t * mx;
      for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] >= level ? 1.0 : 0.0;
    }
  return out;
}

std::string grad_mode_name(GradMode mode) {
  switch (mode) {
    case GradMode::ste: return "ste";
    case GradMode::zero: return "zero";
    case GradMode::sigmoid: return "sigmoid";
  }
  throw std::invalid_argument("unknown grad mode");
}

GradMode grad_mode_from_name(const std::string& name) {
  if (name == "ste") return GradMode::ste;
  if (name == "zero") return GradMode::zero;
  if (name == "sigmoid") return GradMode::sigmoid;
  throw std::invalid_argument("unknown grad mode: " + name);
}

Tensor threshold_backward(const Tensor& grad_out, const Tensor& x,
                          const Tensor& levels, GradMode mode,
                          bool sigmoid_decreasing) {
  switch (mode) {
    case GradMode::ste:
      return grad_out;
    case GradMode::zero:
      return Tensor(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
    case GradMode::sigmoid: {
      const std::size_t N = x.n(), C = x.c(), plane = x.h() * x.w();
      Tensor g = grad_out;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const double x0 = levels.at(n, c, 0, 0);
          const double* p = &x.data[(n * C + c) * plane];
          double* go = &g.data[(n * C + c) * plane];
          for (std::size_t i = 0; i < plane; ++i) {
            const double s = 1.0 / (1.0 + std::exp(-(p[i] - x0)));
            double factor = s * (1.0 - s);
            if (sigmoid_decreasing) factor = -factor;
            go[i] *= factor;
          }
        }
      return g;
    }
  }
  throw std::invalid_argument("unknown grad mode");
}

}  // namespace befb
