#include "befb/gradcheck.hpp"

#include <cmath>
#include <iomanip>
#include <random>

#include "befb/backbones.hpp"
#include "befb/net.hpp"

namespace befb {

namespace {

Tensor random_tensor(std::size_t n, std::size_t c, std::size_t h,
                     std::size_t w, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(n, c, h, w);
  for (double& v : t.data) v = dist(rng);
  return t;
}

double rel_err(const Tensor& analytic, const Tensor& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data[i], f = numeric.data[i];
    const double denom = std::max({std::abs(a), std::abs(f), 1e-4});
    worst = std::max(worst, std::abs(a - f) / denom);
  }
  return worst;
}

// Weighted sum makes any tensor-valued op a scalar function with a known
// chain-rule seed.
double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t.data[i] * w.data[i];
  return s;
}

// Sigmoid with the per-channel center frozen at construction; stands in for
// the threshold layer so both the analytic and numeric paths are smooth.
class FrozenSigmoidLayer : public Layer {
 public:
  explicit FrozenSigmoidLayer(Tensor centers) : centers_(std::move(centers)) {}
  std::string kind() const override { return "threshold-sigmoid"; }
  Tensor forward(const Tensor& x, Cache& cache) const override {
    cache.t.push_back(x);
    Tensor out = x;
    apply(out, [](double s, double) { return s; });
    return out;
  }
  Tensor backward(const Tensor& grad_out, const Cache& cache,
                  const std::string&, ParamGrads*,
                  const BackwardOpts&) const override {
    Tensor g = cache.t.at(0);
    apply(g, [](double s, double) { return s * (1.0 - s); });
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= grad_out.data[i];
    return g;
  }
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<FrozenSigmoidLayer>(centers_);
  }

 private:
  template <typename F>
  void apply(Tensor& t, F f) const {
    const std::size_t N = t.n(), C = t.c(), plane = t.h() * t.w();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double x0 = centers_.at(n % centers_.n(), c, 0, 0);
        double* p = &t.data[(n * C + c) * plane];
        for (std::size_t i = 0; i < plane; ++i) {
          const double s = 1.0 / (1.0 + std::exp(-(p[i] - x0)));
          p[i] = f(s, p[i]);
        }
      }
  }

  Tensor centers_;
};

struct CheckResult {
  std::string kind;
  double err;
};

}  // namespace

bool run_gradcheck(std::ostream& os, bool corrupt_conv) {
  const double h = kGradcheckStep;
  std::mt19937_64 rng(20240817);
  std::vector<CheckResult> results;

  {  // conv: input, kernels, and bias gradients
    Tensor x = random_tensor(2, 3, 6, 6, rng);
    Tensor k = random_tensor(4, 3, 3, 3, rng, 0.5);
    std::vector<double> bias = {0.1, -0.2, 0.3, 0.0};
    const ConvSpec spec{1, 1};
    Tensor seed_w = random_tensor(2, 4, 6, 6, rng);
    ConvGrads analytic = conv2d_grad(x, k, spec, seed_w);
    if (corrupt_conv) {
      for (double& v : analytic.input.data) v += 0.01;
    }
    Tensor fd_x = finite_difference(
        [&](const Tensor& probe) {
          return weighted_sum(conv2d(probe, k, &bias, spec), seed_w);
        },
        x, h);
    Tensor fd_k = finite_difference(
        [&](const Tensor& probe) {
          return weighted_sum(conv2d(x, probe, &bias, spec), seed_w);
        },
        k, h);
    double err = std::max(rel_err(analytic.input, fd_x),
                          rel_err(analytic.kernels, fd_k));
    Tensor ab(1, 4, 1, 1);
    ab.data = analytic.bias;
    Tensor bias_t(1, 4, 1, 1);
    bias_t.data = bias;
    Tensor fd_b = finite_difference(
        [&](const Tensor& probe) {
          return weighted_sum(conv2d(x, k, &probe.data, spec), seed_w);
        },
        bias_t, h);
    err = std::max(err, rel_err(ab, fd_b));
    results.push_back({"conv", err});
  }

  {  // relu, away from the kink
    Tensor x = random_tensor(1, 2, 5, 5, rng);
    for (double& v : x.data) {
      if (std::abs(v) < 0.05) v += 0.1;
    }
    Tensor seed_w = random_tensor(1, 2, 5, 5, rng);
    Tensor analytic = relu_grad(x, seed_w);
    Tensor fd = finite_difference(
        [&](const Tensor& probe) { return weighted_sum(relu(probe), seed_w); },
        x, h);
    results.push_back({"relu", rel_err(analytic, fd)});
  }

  {  // maxpool
    Tensor x = random_tensor(2, 2, 4, 4, rng);
    Tensor seed_w = random_tensor(2, 2, 2, 2, rng);
    Tensor analytic = maxpool2_grad(x, seed_w);
    Tensor fd = finite_difference(
        [&](const Tensor& probe) {
          return weighted_sum(maxpool2(probe), seed_w);
        },
        x, h);
    results.push_back({"maxpool", rel_err(analytic, fd)});
  }

  {  // dense: input, weights, bias
    Tensor x = random_tensor(3, 7, 1, 1, rng);
    Tensor w = random_tensor(7, 5, 1, 1, rng);
    std::vector<double> bias(5, 0.25);
    Tensor seed_w = random_tensor(3, 5, 1, 1, rng);
    DenseGrads analytic = dense_grad(x, w, seed_w);
    Tensor fd_x = finite_difference(
        [&](const Tensor& probe) {
          return weighted_sum(dense(probe, w, bias), seed_w);
        },
        x, h);
    Tensor fd_w = finite_difference(
        [&](const Tensor& probe) {
          return weighted_sum(dense(x, probe, bias), seed_w);
        },
        w, h);
    double err = std::max(rel_err(analytic.input, fd_x),
                          rel_err(analytic.weights, fd_w));
    results.push_back({"dense", err});
  }

  {  // softmax cross-entropy gradient wrt logits
    Tensor logits = random_tensor(4, 6, 1, 1, rng);
    std::vector<int> labels = {0, 3, 5, 2};
    auto [loss, analytic] = softmax_cross_entropy(logits, labels);
    (void)loss;
    Tensor fd = finite_difference(
        [&](const Tensor& probe) {
          return softmax_cross_entropy(probe, labels).first;
        },
        logits, h);
    results.push_back({"softmax", rel_err(analytic, fd)});
  }

  {  // grayscale
    GrayscaleLayer layer;
    Tensor x = random_tensor(2, 3, 4, 4, rng);
    Tensor seed_w = random_tensor(2, 1, 4, 4, rng);
    Cache cache;
    layer.forward(x, cache);
    Tensor analytic =
        layer.backward(seed_w, cache, "", nullptr, BackwardOpts{});
    Tensor fd = finite_difference(
        [&](const Tensor& probe) {
          Cache c;
          return weighted_sum(layer.forward(probe, c), seed_w);
        },
        x, h);
    results.push_back({"grayscale", rel_err(analytic, fd)});
  }

  {  // sobel layer: input gradient and all four kernel gradients
    std::mt19937_64 layer_rng(7);
    SobelLayer layer(SobelMode::multiple, layer_rng);
    Tensor x = random_tensor(1, 1, 6, 6, rng);
    Tensor seed_w = random_tensor(1, 1, 6, 6, rng);
    Cache cache;
    layer.forward(x, cache);
    ParamGrads grads;
    BackwardOpts opts;
    Tensor analytic = layer.backward(seed_w, cache, "", &grads, opts);
    Tensor fd = finite_difference(
        [&](const Tensor& probe) {
          Cache c;
          return weighted_sum(layer.forward(probe, c), seed_w);
        },
        x, h);
    double err = rel_err(analytic, fd);
    for (std::size_t i = 0; i < layer.kernels.size(); ++i) {
      Tensor fd_k = finite_difference(
          [&](const Tensor& probe) {
            SobelLayer perturbed = layer;
            perturbed.kernels[i] = probe;
            Cache c;
            return weighted_sum(perturbed.forward(x, c), seed_w);
          },
          layer.kernels[i], h);
      err = std::max(err, rel_err(grads.at("k" + std::to_string(i)), fd_k));
    }
    results.push_back({"sobel", err});
  }

  {  // frozen-sigmoid threshold surrogate
    Tensor x = random_tensor(2, 1, 5, 5, rng);
    Tensor centers = threshold_levels(x, 0.6);
    FrozenSigmoidLayer layer(centers);
    Tensor seed_w = random_tensor(2, 1, 5, 5, rng);
    Cache cache;
    layer.forward(x, cache);
    Tensor analytic =
        layer.backward(seed_w, cache, "", nullptr, BackwardOpts{});
    Tensor fd = finite_difference(
        [&](const Tensor& probe) {
          Cache c;
          return weighted_sum(layer.forward(probe, c), seed_w);
        },
        x, h);
    results.push_back({"threshold-sigmoid", rel_err(analytic, fd)});
  }

  {  // residual block with projection
    std::mt19937_64 layer_rng(11);
    ResidualBlock block(2, 3, layer_rng);
    Tensor x = random_tensor(1, 2, 4, 4, rng);
    Tensor seed_w = random_tensor(1, 3, 4, 4, rng);
    Cache cache;
    block.forward(x, cache);
    BackwardOpts opts;
    ParamGrads grads;
    Tensor analytic = block.backward(seed_w, cache, "", &grads, opts);
    Tensor fd = finite_difference(
        [&](const Tensor& probe) {
          Cache c;
          return weighted_sum(block.forward(probe, c), seed_w);
        },
        x, h);
    results.push_back({"residual-block", rel_err(analytic, fd)});
  }

  {  // full integrated model, threshold swapped for the frozen surrogate
    std::mt19937_64 net_rng(3);
    BackboneConfig bc;
    bc.widths = {2, 3};
    bc.head_width = 8;
    Network net = build_small_vgg(bc, {1, 8, 8}, 3, net_rng);
    BranchParams bp;
    bp.sobel_layers = 2;
    bp.t = 0.6;
    bp.mode = SobelMode::multiple;
    net = build_integrated(net, bp, net_rng);

    Tensor x = random_tensor(2, 1, 8, 8, rng, 0.5);
    for (double& v : x.data) v = std::abs(v);

    // freeze the sigmoid center from the unperturbed input
    {
      Tensor pre = x;
      for (std::size_t i = 0; i + 1 < net.branch.size(); ++i) {
        if (net.branch[i]->kind() == "threshold") break;
        Cache c;
        pre = net.branch[i]->forward(pre, c);
      }
      Tensor centers = threshold_levels(pre, bp.t);
      for (auto& layer : net.branch) {
        if (layer->kind() == "threshold") {
          layer = std::make_unique<FrozenSigmoidLayer>(centers);
        }
      }
    }

    std::vector<int> labels = {0, 2};
    NetCache cache;
    Tensor logits = net.forward(x, &cache);
    auto [loss, grad_logits] = softmax_cross_entropy(logits, labels);
    (void)loss;
    BackwardOpts opts;
    Tensor grad_input;
    ParamGrads grads = net.backward(cache, grad_logits, opts, &grad_input);

    auto loss_of = [&](Network& n, const Tensor& input) {
      return softmax_cross_entropy(n.forward(input), labels).first;
    };
    Tensor fd_input = finite_difference(
        [&](const Tensor& probe) { return loss_of(net, probe); }, x, h);
    double err = rel_err(grad_input, fd_input);
    for (auto& p : net.params()) {
      Tensor fd_p = finite_difference(
          [&](const Tensor& probe) {
            Tensor saved = *p.value;
            *p.value = probe;
            double v = loss_of(net, x);
            *p.value = saved;
            return v;
          },
          *p.value, h);
      err = std::max(err, rel_err(grads.at(p.name), fd_p));
    }
    results.push_back({"befb-network", err});
  }

  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.err < kGradcheckTolerance;
    ok = ok && pass;
    os << (pass ? "ok   " : "FAIL ") << std::left << std::setw(20) << r.kind
       << " max rel err " << std::scientific << std::setprecision(3) << r.err
       << std::defaultfloat << "\n";
  }
  return ok;
}

}  // namespace befb
