#include "befb/backbones.hpp"

#include <sstream>

namespace befb {

std::string family_name(BackboneFamily family) {
  switch (family) {
    case BackboneFamily::vgg_small: return "vgg_small";
    case BackboneFamily::resnet_small: return "resnet_small";
  }
  throw std::invalid_argument("unknown backbone family");
}

BackboneFamily family_from_name(const std::string& name) {
  if (name == "vgg_small") return BackboneFamily::vgg_small;
  if (name == "resnet_small") return BackboneFamily::resnet_small;
  throw std::invalid_argument("unknown backbone family: " + name);
}

static std::string widths_str(const std::vector<std::size_t>& widths) {
  std::ostringstream os;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) os << ",";
    os << widths[i];
  }
  return os.str();
}

static std::vector<std::size_t> widths_from_str(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoul(tok));
  return out;
}

static std::size_t flat_width(const Network& net) {
  Tensor probe(1, net.input_shape[0], net.input_shape[1], net.input_shape[2]);
  Tensor out = probe;
  for (const auto& layer : net.backbone) {
    Cache c;
    out = layer->forward(out, c);
  }
  return out.c() * out.h() * out.w();
}

static void build_head(Network& net, std::size_t in_width,
                       std::size_t head_width, std::size_t classes,
                       std::mt19937_64& rng) {
  net.head.clear();
  net.head.push_back(std::make_unique<DenseLayer>(
      he_init_dense(in_width, head_width, rng), Tensor(1, head_width, 1, 1)));
  net.head.push_back(std::make_unique<ReluLayer>());
  net.head.push_back(std::make_unique<DenseLayer>(
      he_init_dense(head_width, classes, rng), Tensor(1, classes, 1, 1)));
}

static void check_cfg(const BackboneConfig& cfg,
                      const std::array<std::size_t, 3>& input_shape) {
  if (cfg.widths.empty()) {
    throw std::invalid_argument("backbone needs at least one stage");
  }
  std::size_t h = input_shape[1], w = input_shape[2];
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0) {
      throw std::invalid_argument(
          "backbone spatial dims collapse at stage " + std::to_string(i) +
          " (" + std::to_string(h) + "x" + std::to_string(w) + ")");
    }
    h /= 2;
    w /= 2;
  }
}

Network build_small_vgg(const BackboneConfig& cfg,
                        const std::array<std::size_t, 3>& input_shape,
                        std::size_t classes, std::mt19937_64& rng) {
  check_cfg(cfg, input_shape);
  Network net;
  net.input_shape = input_shape;
  net.class_count = classes;
  std::size_t in_ch = input_shape[0];
  for (std::size_t width : cfg.widths) {
    net.backbone.push_back(std::make_unique<ConvLayer>(
        he_init_kernels(width, in_ch, 3, rng), Tensor(1, width, 1, 1),
        ConvSpec{1, 1}));
    net.backbone.push_back(std::make_unique<ReluLayer>());
    net.backbone.push_back(std::make_unique<ConvLayer>(
        he_init_kernels(width, width, 3, rng), Tensor(1, width, 1, 1),
        ConvSpec{1, 1}));
    net.backbone.push_back(std::make_unique<ReluLayer>());
    net.backbone.push_back(std::make_unique<MaxPoolLayer>());
    in_ch = width;
  }
  build_head(net, flat_width(net), cfg.head_width, classes, rng);
  net.name = "vgg_small";
  net.descriptor["family"] = "vgg_small";
  net.descriptor["widths"] = widths_str(cfg.widths);
  net.descriptor["head_width"] = std::to_string(cfg.head_width);
  net.descriptor["input_c"] = std::to_string(input_shape[0]);
  net.descriptor["input_h"] = std::to_string(input_shape[1]);
  net.descriptor["input_w"] = std::to_string(input_shape[2]);
  net.descriptor["classes"] = std::to_string(classes);
  net.descriptor["branch"] = "none";
  return net;
}

Network build_small_resnet(const BackboneConfig& cfg,
                           const std::array<std::size_t, 3>& input_shape,
                           std::size_t classes, std::mt19937_64& rng) {
  check_cfg(cfg, input_shape);
  Network net;
  net.input_shape = input_shape;
  net.class_count = classes;
  net.backbone.push_back(std::make_unique<ConvLayer>(
      he_init_kernels(cfg.widths[0], input_shape[0], 3, rng),
      Tensor(1, cfg.widths[0], 1, 1), ConvSpec{1, 1}));
  net.backbone.push_back(std::make_unique<ReluLayer>());
  std::size_t in_ch = cfg.widths[0];
  for (std::size_t width : cfg.widths) {
    net.backbone.push_back(
        std::make_unique<ResidualBlock>(in_ch, width, rng));
    net.backbone.push_back(std::make_unique<MaxPoolLayer>());
    in_ch = width;
  }
  build_head(net, flat_width(net), cfg.head_width, classes, rng);
  net.name = "resnet_small";
  net.descriptor["family"] = "resnet_small";
  net.descriptor["widths"] = widths_str(cfg.widths);
  net.descriptor["head_width"] = std::to_string(cfg.head_width);
  net.descriptor["input_c"] = std::to_string(input_shape[0]);
  net.descriptor["input_h"] = std::to_string(input_shape[1]);
  net.descriptor["input_w"] = std::to_string(input_shape[2]);
  net.descriptor["classes"] = std::to_string(classes);
  net.descriptor["branch"] = "none";
  return net;
}

static std::string variant_name(BranchVariant v) {
  switch (v) {
    case BranchVariant::full: return "full";
    case BranchVariant::tlre: return "tlre";
    case BranchVariant::slre: return "slre";
  }
  throw std::invalid_argument("unknown branch variant");
}

static BranchVariant variant_from_name(const std::string& s) {
  if (s == "full") return BranchVariant::full;
  if (s == "tlre") return BranchVariant::tlre;
  if (s == "slre") return BranchVariant::slre;
  throw std::invalid_argument("unknown branch variant: " + s);
}

static std::vector<std::unique_ptr<Layer>> build_variant_branch(
    const BranchParams& p, std::mt19937_64& rng) {
  switch (p.variant) {
    case BranchVariant::full:
      return build_befb_branch(p.sobel_layers, p.t, p.mode, rng);
    case BranchVariant::tlre: {
      std::vector<std::unique_ptr<Layer>> layers;
      layers.push_back(std::make_unique<GrayscaleLayer>());
      for (std::size_t i = 0; i < p.sobel_layers; ++i)
        layers.push_back(std::make_unique<SobelLayer>(p.mode, rng));
      layers.push_back(std::make_unique<FlattenLayer>());
      return layers;
    }
    case BranchVariant::slre: {
      std::vector<std::unique_ptr<Layer>> layers;
      layers.push_back(std::make_unique<GrayscaleLayer>());
      layers.push_back(std::make_unique<ThresholdLayer>(p.t));
      layers.push_back(std::make_unique<FlattenLayer>());
      return layers;
    }
  }
  throw std::invalid_argument("unknown branch variant");
}

Network build_integrated(const Network& backbone, const BranchParams& params,
                         std::mt19937_64& rng) {
  if (backbone.has_branch()) {
    throw std::invalid_argument("network already has a BEFB branch");
  }
  if (params.variant != BranchVariant::slre && params.sobel_layers < 1) {
    throw std::invalid_argument("befb branch needs at least one Sobel layer");
  }
  Network net = backbone;
  net.branch = build_variant_branch(params, rng);

  // Sobel stack is shape-preserving, grayscale is single-channel, so the
  // branch always flattens to H*W.
  const std::size_t branch_width = net.input_shape[1] * net.input_shape[2];
  const std::size_t head_width =
      std::stoul(net.descriptor.at("head_width"));
  build_head(net, flat_width(net) + branch_width, head_width, net.class_count,
             rng);

  std::string suffix = params.mode == SobelMode::single ? "-BEFB-single"
                                                        : "-BEFB-multiple";
  if (params.variant != BranchVariant::full) {
    suffix += "-" + variant_name(params.variant);
  }
  net.name = backbone.name + suffix;
  net.descriptor["branch"] =
      params.mode == SobelMode::single ? "single" : "multiple";
  net.descriptor["branch_variant"] = variant_name(params.variant);
  net.descriptor["sobel_layers"] = std::to_string(params.sobel_layers);
  net.descriptor["threshold_t"] = std::to_string(params.t);
  return net;
}

Network build_from_descriptor(const std::map<std::string, std::string>& desc) {
  auto get = [&desc](const std::string& key) -> const std::string& {
    auto it = desc.find(key);
    if (it == desc.end()) {
      throw CheckpointError("architecture descriptor missing key \"" + key +
                            "\"");
    }
    return it->second;
  };
  BackboneConfig cfg;
  cfg.family = family_from_name(get("family"));
  cfg.widths = widths_from_str(get("widths"));
  cfg.head_width = std::stoul(get("head_width"));
  std::array<std::size_t, 3> input_shape = {std::stoul(get("input_c")),
                                            std::stoul(get("input_h")),
                                            std::stoul(get("input_w"))};
  const std::size_t classes = std::stoul(get("classes"));

  std::mt19937_64 rng(0);  // parameters are overwritten by the loader
  Network net;
  try {
    net = cfg.family == BackboneFamily::vgg_small
              ? build_small_vgg(cfg, input_shape, classes, rng)
              : build_small_resnet(cfg, input_shape, classes, rng);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("bad architecture descriptor: ") +
                          e.what());
  }

  const std::string& branch = get("branch");
  if (branch == "none") return net;
  if (branch != "single" && branch != "multiple") {
    throw CheckpointError("unknown branch layer kind \"" + branch + "\"");
  }
  BranchParams p;
  p.mode = branch == "single" ? SobelMode::single : SobelMode::multiple;
  p.sobel_layers = std::stoul(get("sobel_layers"));
  p.t = std::stod(get("threshold_t"));
  auto it = desc.find("branch_variant");
  if (it != desc.end()) p.variant = variant_from_name(it->second);
  Network base = std::move(net);
  base.branch.clear();
  return build_integrated(base, p, rng);
}

}  // namespace befb
