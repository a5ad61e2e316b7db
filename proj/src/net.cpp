#include "befb/net.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace befb {

static std::vector<std::unique_ptr<Layer>> clone_layers(
    const std::vector<std::unique_ptr<Layer>>& src) {
  std::vector<std::unique_ptr<Layer>> out;
  out.reserve(src.size());
  for (const auto& l : src) out.push_back(l->clone());
  return out;
}

Network::Network(const Network& other)
    : backbone(clone_layers(other.backbone)),
      branch(clone_layers(other.branch)),
      head(clone_layers(other.head)),
      input_shape(other.input_shape),
      class_count(other.class_count),
      name(other.name),
      descriptor(other.descriptor) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    backbone = clone_layers(other.backbone);
    branch = clone_layers(other.branch);
    head = clone_layers(other.head);
    input_shape = other.input_shape;
    class_count = other.class_count;
    name = other.name;
    descriptor = other.descriptor;
  }
  return *this;
}

static Tensor run_layers(const std::vector<std::unique_ptr<Layer>>& layers,
                         Tensor x, std::vector<Cache>* caches) {
  for (const auto& layer : layers) {
    Cache c;
    x = layer->forward(x, c);
    if (caches) caches->push_back(std::move(c));
  }
  return x;
}

Tensor Network::forward(const Tensor& batch, NetCache* cache) const {
  if (batch.c() != input_shape[0] || batch.h() != input_shape[1] ||
      batch.w() != input_shape[2]) {
    throw ShapeError("network expects input (C,H,W) = (" +
                     std::to_string(input_shape[0]) + "," +
                     std::to_string(input_shape[1]) + "," +
                     std::to_string(input_shape[2]) + "), got " +
                     batch.shape_str());
  }
  NetCache local;
  NetCache& c = cache ? *cache : local;
  c = NetCache{};

  Tensor backbone_out =
      run_layers(backbone, batch, cache ? &c.backbone : nullptr);
  c.backbone_shape = backbone_out.shape;
  c.backbone_flat = backbone_out.flattened();

  Tensor merged;
  if (has_branch()) {
    Tensor branch_out = run_layers(branch, batch, cache ? &c.branch : nullptr);
    c.branch_flat = branch_out.flattened();
    const std::size_t N = batch.n();
    const std::size_t db = c.backbone_flat.c(), dr = c.branch_flat.c();
    merged = Tensor(N, db + dr, 1, 1);
    for (std::size_t n = 0; n < N; ++n) {
      std::memcpy(&merged.data[n * (db + dr)], &c.backbone_flat.data[n * db],
                  db * sizeof(double));
      std::memcpy(&merged.data[n * (db + dr) + db], &c.branch_flat.data[n * dr],
                  dr * sizeof(double));
    }
  } else {
    merged = c.backbone_flat;
  }

  Tensor logits = run_layers(head, merged, cache ? &c.head : nullptr);
  c.valid = cache != nullptr;
  return logits;
}

static Tensor backward_layers(const std::vector<std::unique_ptr<Layer>>& layers,
                              const std::vector<Cache>& caches,
                              const std::string& prefix, Tensor grad,
                              ParamGrads* grads, const BackwardOpts& opts) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    grad = layers[i]->backward(grad, caches.at(i),
                               prefix + std::to_string(i) + ".", grads, opts);
  }
  return grad;
}

ParamGrads Network::backward(const NetCache& cache, const Tensor& grad_logits,
                             const BackwardOpts& opts,
                             Tensor* grad_input) const {
  if (!cache.valid) {
    throw std::logic_error("network backward called with a stale cache");
  }
  ParamGrads grads;
  ParamGrads* gp = opts.want_param_grads ? &grads : nullptr;

  Tensor grad_merged =
      backward_layers(head, cache.head, "head.", grad_logits, gp, opts);

  const std::size_t N = grad_merged.n();
  const std::size_t db = cache.backbone_flat.c();
  Tensor grad_backbone_flat(N, db, 1, 1);
  Tensor grad_branch_flat;
  if (has_branch()) {
    const std::size_t dr = cache.branch_flat.c();
    grad_branch_flat = Tensor(N, dr, 1, 1);
    for (std::size_t n = 0; n < N; ++n) {
      std::memcpy(&grad_backbone_flat.data[n * db],
                  &grad_merged.data[n * (db + dr)], db * sizeof(double));
      std::memcpy(&grad_branch_flat.data[n * dr],
                  &grad_merged.data[n * (db + dr) + db], dr * sizeof(double));
    }
  } else {
    grad_backbone_flat = grad_merged;
  }

  const auto& bs = cache.backbone_shape;
  Tensor grad_in_backbone = backward_layers(
      backbone, cache.backbone, "backbone.",
      grad_backbone_flat.reshaped(bs[0], bs[1], bs[2], bs[3]), gp, opts);

  if (has_branch()) {
    Tensor grad_in_branch = backward_layers(branch, cache.branch, "branch.",
                                            grad_branch_flat, gp, opts);
    if (grad_input) {
      *grad_input = grad_in_backbone;
      for (std::size_t i = 0; i < grad_input->size(); ++i)
        grad_input->data[i] += grad_in_branch.data[i];
    }
  } else if (grad_input) {
    *grad_input = std::move(grad_in_backbone);
  }
  return grads;
}

Tensor Network::input_gradient(const Tensor& x, const std::vector<int>& labels,
                               GradMode mode, bool sigmoid_decreasing) const {
  NetCache cache;
  Tensor logits = forward(x, &cache);
  auto [loss, grad_logits] = softmax_cross_entropy(logits, labels);
  (void)loss;
  BackwardOpts opts;
  opts.threshold_mode = mode;
  opts.sigmoid_decreasing = sigmoid_decreasing;
  opts.want_param_grads = false;
  Tensor grad_input;
  backward(cache, grad_logits, opts, &grad_input);
  return grad_input;
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < backbone.size(); ++i)
    backbone[i]->collect_params("backbone." + std::to_string(i) + ".", out);
  for (std::size_t i = 0; i < branch.size(); ++i)
    branch[i]->collect_params("branch." + std::to_string(i) + ".", out);
  for (std::size_t i = 0; i < head.size(); ++i)
    head[i]->collect_params("head." + std::to_string(i) + ".", out);
  return out;
}

std::size_t Network::param_count() {
  std::size_t total = 0;
  for (const auto& p : params()) total += p.value->size();
  return total;
}

void Network::project_constraints() {
  for (auto& l : backbone) l->project();
  for (auto& l : branch) l->project();
  for (auto& l : head) l->project();
}

bool Network::constraints_satisfied() const {
  for (const auto& l : branch) {
    if (const auto* sobel = dynamic_cast<const SobelLayer*>(l.get())) {
      if (!sobel->feasible()) return false;
    }
  }
  return true;
}

// ---- checkpoint io ----

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw CheckpointError("checkpoint truncated while reading " + what);
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write("BEFB", 4);
  write_u32(os, kCheckpointVersion);

  std::ostringstream desc;
  for (const auto& [key, value] : net.descriptor) {
    desc << key << " = " << value << "\n";
  }
  const std::string desc_str = desc.str();
  write_u32(os, static_cast<std::uint32_t>(desc_str.size()));
  os.write(desc_str.data(), static_cast<std::streamsize>(desc_str.size()));

  auto params = net.params();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    for (std::size_t d = 0; d < 4; ++d)
      write_u32(os, static_cast<std::uint32_t>(p.value->shape[d]));
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(p.value->data.data()),
             static_cast<std::streamsize>(p.value->size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failed for " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "BEFB", 4) != 0) {
    throw CheckpointError("bad magic in " + path +
                          " (expected \"BEFB\")");
  }
  const std::uint32_t version = read_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t desc_len = read_u32(is, "descriptor length");
  std::string desc_str(desc_len, '\0');
  if (!is.read(desc_str.data(), desc_len)) {
    throw CheckpointError("checkpoint truncated in descriptor");
  }
  std::map<std::string, std::string> desc;
  std::istringstream ds(desc_str);
  std::string line;
  while (std::getline(ds, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    desc[line.substr(0, eq)] = line.substr(eq + 3);
  }

  Network net = build_from_descriptor(desc);
  auto params = net.params();
  std::map<std::string, Tensor*> by_name;
  for (auto& p : params) by_name[p.name] = p.value;

  const std::uint32_t count = read_u32(is, "tensor count");
  if (count != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) +
                          " tensors, architecture expects " +
                          std::to_string(params.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is, "tensor name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw CheckpointError("checkpoint truncated in tensor name");
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError("checkpoint tensor \"" + name +
                            "\" not present in the architecture");
    }
    std::array<std::size_t, 4> shape;
    for (std::size_t d = 0; d < 4; ++d)
      shape[d] = read_u32(is, "tensor shape");
    if (shape != it->second->shape) {
      throw CheckpointError("checkpoint tensor \"" + name +
                            "\" shape mismatch");
    }
    if (!is.read(reinterpret_cast<char*>(it->second->data.data()),
                 static_cast<std::streamsize>(it->second->size() *
                                              sizeof(double)))) {
      throw CheckpointError("checkpoint truncated in tensor \"" + name + "\"");
    }
  }
  return net;
}

}  // namespace befb
