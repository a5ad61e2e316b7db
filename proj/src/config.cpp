#include "befb/config.hpp"

#include <fstream>
#include <sstream>

namespace befb {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, sep)) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw ConfigError("config key \"" + key + "\": bad boolean \"" + value +
                    "\"");
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    return std::stoul(value);
  } catch (const std::exception&) {
    throw ConfigError("config key \"" + key + "\": bad integer \"" + value +
                      "\"");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw ConfigError("config key \"" + key + "\": bad number \"" + value +
                      "\"");
  }
}

}  // namespace

AttackConfig parse_attack_spec(const std::string& spec) {
  std::istringstream is(spec);
  std::string kind;
  if (!(is >> kind)) throw ConfigError("empty attack spec");
  AttackConfig cfg;
  try {
    cfg.kind = attack_kind_from_name(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("attack spec token \"" + tok +
                        "\" is not key=value");
    }
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (key == "eps") {
      cfg.epsilon = parse_real(key, value);
    } else if (key == "steps") {
      cfg.steps = static_cast<int>(parse_size(key, value));
    } else if (key == "stepsize") {
      cfg.stepsize = parse_real(key, value);
    } else if (key == "grad") {
      try {
        cfg.grad_mode = grad_mode_from_name(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "sigma") {
      cfg.sigma = parse_real(key, value);
    } else if (key == "mean") {
      cfg.mean = parse_real(key, value);
    } else if (key == "random_init") {
      cfg.random_init = parse_bool(key, value);
    } else {
      throw ConfigError("unknown attack spec key \"" + key + "\"");
    }
  }
  if (cfg.epsilon < 0.0) {
    throw ConfigError("attack epsilon must be non-negative");
  }
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (kv.count(key)) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": duplicate key \"" + key + "\"");
    }
    kv[key] = value;
  }

  RunConfig cfg;
  auto take = [&kv](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return "";
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto take_or = [&take](const std::string& key, const std::string& dflt) {
    std::string v = take(key);
    return v.empty() ? dflt : v;
  };

  cfg.dataset = take("dataset");
  if (cfg.dataset.empty()) {
    throw ConfigError("config key \"dataset\" is required");
  }
  if (cfg.dataset != "mnist" && cfg.dataset != "cifar10" &&
      cfg.dataset != "shapes") {
    throw ConfigError("config key \"dataset\": unknown dataset \"" +
                      cfg.dataset + "\"");
  }
  cfg.mnist_train_images = take("mnist_train_images");
  cfg.mnist_train_labels = take("mnist_train_labels");
  cfg.mnist_test_images = take("mnist_test_images");
  cfg.mnist_test_labels = take("mnist_test_labels");
  cfg.cifar_train_batches = split(take("cifar_train_batches"), ',');
  cfg.cifar_test_batches = split(take("cifar_test_batches"), ',');
  if (cfg.dataset == "mnist") {
    for (const auto& [key, value] :
         std::initializer_list<std::pair<const char*, const std::string*>>{
             {"mnist_train_images", &cfg.mnist_train_images},
             {"mnist_train_labels", &cfg.mnist_train_labels},
             {"mnist_test_images", &cfg.mnist_test_images},
             {"mnist_test_labels", &cfg.mnist_test_labels}}) {
      if (value->empty()) {
        throw ConfigError("config key \"" + std::string(key) +
                          "\" is required for dataset = mnist");
      }
    }
  }
  if (cfg.dataset == "cifar10") {
    if (cfg.cifar_train_batches.empty() || cfg.cifar_test_batches.empty()) {
      throw ConfigError(
          "config keys \"cifar_train_batches\" and \"cifar_test_batches\" "
          "are required for dataset = cifar10");
    }
  }
  cfg.n_train = parse_size("n_train", take_or("n_train", "0"));
  cfg.n_test = parse_size("n_test", take_or("n_test", "0"));
  cfg.subset_seed = parse_size("subset_seed", take_or("subset_seed", "0"));
  cfg.stratified = parse_bool("stratified", take_or("stratified", "true"));
  cfg.shapes_size = parse_size("shapes_size", take_or("shapes_size", "28"));

  try {
    cfg.family = family_from_name(take_or("family", "vgg_small"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.widths.clear();
  for (const auto& tok : split(take_or("widths", "4,8"), ',')) {
    cfg.widths.push_back(parse_size("widths", tok));
  }
  cfg.head_width = parse_size("head_width", take_or("head_width", "64"));
  cfg.befb = take_or("befb", "off");
  if (cfg.befb != "off" && cfg.befb != "single" && cfg.befb != "multiple") {
    throw ConfigError("config key \"befb\": expected off|single|multiple");
  }
  cfg.sobel_layers =
      parse_size("sobel_layers", take_or("sobel_layers", "2"));
  cfg.threshold_t =
      parse_real("threshold_t", take_or("threshold_t", "0.8"));
  const std::string variant = take_or("branch_variant", "full");
  if (variant == "full") {
    cfg.branch_variant = BranchVariant::full;
  } else if (variant == "tlre") {
    cfg.branch_variant = BranchVariant::tlre;
  } else if (variant == "slre") {
    cfg.branch_variant = BranchVariant::slre;
  } else {
    throw ConfigError("config key \"branch_variant\": expected full|tlre|slre");
  }

  cfg.training.epochs = parse_size("epochs", take_or("epochs", "5"));
  cfg.training.batch_size =
      parse_size("batch_size", take_or("batch_size", "32"));
  cfg.training.learning_rate =
      parse_real("learning_rate", take_or("learning_rate", "0.01"));
  cfg.training.momentum = parse_real("momentum", take_or("momentum", "0.9"));
  cfg.training.lr_decay_factor =
      parse_real("lr_decay_factor", take_or("lr_decay_factor", "1.0"));
  cfg.training.lr_decay_interval =
      parse_size("lr_decay_interval", take_or("lr_decay_interval", "1"));
  cfg.training.seed = parse_size("seed", take_or("seed", "1"));

  cfg.adversarial = parse_bool("adversarial", take_or("adversarial", "off"));
  cfg.at_replace_fraction = parse_real(
      "at_replace_fraction", take_or("at_replace_fraction", "0.5"));
  cfg.at_attack.kind = AttackKind::pgd;
  cfg.at_attack.epsilon =
      parse_real("at_epsilon", take_or("at_epsilon", "80"));
  cfg.at_attack.steps = static_cast<int>(
      parse_size("at_steps", take_or("at_steps", "8")));
  cfg.at_attack.stepsize =
      parse_real("at_stepsize", take_or("at_stepsize", "20"));
  cfg.at_attack.random_init =
      parse_bool("at_random_init", take_or("at_random_init", "true"));
  cfg.at_attack.grad_mode = GradMode::ste;
  if (cfg.adversarial) {
    cfg.training.adversarial =
        AdversarialTrainConfig{cfg.at_attack, cfg.at_replace_fraction};
  }

  for (const auto& spec : split(take("attacks"), ';')) {
    cfg.attacks.push_back(parse_attack_spec(spec));
  }
  cfg.eval_seed = parse_size("eval_seed", take_or("eval_seed", "0"));
  cfg.output_dir = take("output_dir");

  if (!kv.empty()) {
    throw ConfigError("unknown config key \"" + kv.begin()->first + "\"");
  }

  // resolved view with defaults filled in
  auto& r = cfg.resolved;
  r["dataset"] = cfg.dataset;
  if (!cfg.mnist_train_images.empty()) {
    r["mnist_train_images"] = cfg.mnist_train_images;
    r["mnist_train_labels"] = cfg.mnist_train_labels;
    r["mnist_test_images"] = cfg.mnist_test_images;
    r["mnist_test_labels"] = cfg.mnist_test_labels;
  }
  if (!cfg.cifar_train_batches.empty()) {
    std::string a, b;
    for (const auto& p : cfg.cifar_train_batches) a += (a.empty() ? "" : ",") + p;
    for (const auto& p : cfg.cifar_test_batches) b += (b.empty() ? "" : ",") + p;
    r["cifar_train_batches"] = a;
    r["cifar_test_batches"] = b;
  }
  r["n_train"] = std::to_string(cfg.n_train);
  r["n_test"] = std::to_string(cfg.n_test);
  r["subset_seed"] = std::to_string(cfg.subset_seed);
  r["stratified"] = cfg.stratified ? "true" : "false";
  r["shapes_size"] = std::to_string(cfg.shapes_size);
  r["family"] = family_name(cfg.family);
  {
    std::string w;
    for (auto v : cfg.widths) w += (w.empty() ? "" : ",") + std::to_string(v);
    r["widths"] = w;
  }
  r["head_width"] = std::to_string(cfg.head_width);
  r["befb"] = cfg.befb;
  r["sobel_layers"] = std::to_string(cfg.sobel_layers);
  r["threshold_t"] = std::to_string(cfg.threshold_t);
  r["branch_variant"] = variant;
  r["epochs"] = std::to_string(cfg.training.epochs);
  r["batch_size"] = std::to_string(cfg.training.batch_size);
  r["learning_rate"] = std::to_string(cfg.training.learning_rate);
  r["momentum"] = std::to_string(cfg.training.momentum);
  r["lr_decay_factor"] = std::to_string(cfg.training.lr_decay_factor);
  r["lr_decay_interval"] = std::to_string(cfg.training.lr_decay_interval);
  r["seed"] = std::to_string(cfg.training.seed);
  r["adversarial"] = cfg.adversarial ? "on" : "off";
  r["at_replace_fraction"] = std::to_string(cfg.at_replace_fraction);
  r["at_epsilon"] = std::to_string(cfg.at_attack.epsilon);
  r["at_steps"] = std::to_string(cfg.at_attack.steps);
  r["at_stepsize"] = std::to_string(cfg.at_attack.stepsize);
  r["at_random_init"] = cfg.at_attack.random_init ? "true" : "false";
  {
    std::string a;
    for (const auto& atk : cfg.attacks)
      a += (a.empty() ? "" : "; ") + atk.label();
    r["attacks"] = a;
  }
  r["eval_seed"] = std::to_string(cfg.eval_seed);
  r["output_dir"] = cfg.output_dir;
  return cfg;
}

std::pair<Dataset, Dataset> load_configured_datasets(const RunConfig& cfg) {
  if (cfg.dataset == "shapes") {
    const std::size_t n_train = cfg.n_train ? cfg.n_train : 300;
    const std::size_t n_test = cfg.n_test ? cfg.n_test : 90;
    return {synthetic_shapes(n_train, cfg.shapes_size, cfg.subset_seed),
            synthetic_shapes(n_test, cfg.shapes_size, cfg.subset_seed + 1)};
  }
  Dataset train_full, test_full;
  if (cfg.dataset == "mnist") {
    train_full = load_idx(cfg.mnist_train_images, cfg.mnist_train_labels);
    test_full = load_idx(cfg.mnist_test_images, cfg.mnist_test_labels);
  } else {
    train_full = load_cifar10_bin(cfg.cifar_train_batches);
    test_full = load_cifar10_bin(cfg.cifar_test_batches);
  }
  Dataset train = cfg.n_train
                      ? subset(train_full, cfg.n_train, 0, cfg.subset_seed,
                               cfg.stratified)
                            .first
                      : std::move(train_full);
  Dataset test = cfg.n_test
                     ? subset(test_full, cfg.n_test, 0, cfg.subset_seed + 1,
                              cfg.stratified)
                           .first
                     : std::move(test_full);
  return {std::move(train), std::move(test)};
}

Network build_configured_model(const RunConfig& cfg,
                               const std::array<std::size_t, 3>& input_shape,
                               std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BackboneConfig bc;
  bc.family = cfg.family;
  bc.widths = cfg.widths;
  bc.head_width = cfg.head_width;
  Network net = cfg.family == BackboneFamily::vgg_small
                    ? build_small_vgg(bc, input_shape, classes, rng)
                    : build_small_resnet(bc, input_shape, classes, rng);
  if (cfg.befb != "off") {
    BranchParams bp;
    bp.sobel_layers = cfg.sobel_layers;
    bp.t = cfg.threshold_t;
    bp.mode = cfg.befb == "single" ? SobelMode::single : SobelMode::multiple;
    bp.variant = cfg.branch_variant;
    net = build_integrated(net, bp, rng);
  }
  return net;
}

void write_resolved_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& [key, value] : cfg.resolved) {
    os << key << " = " << value << "\n";
  }
}

}  // namespace befb
