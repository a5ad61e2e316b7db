#include "befb/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace befb {

namespace {

double now_sec() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels,
                          std::vector<std::size_t>* per_class_correct,
                          std::vector<std::size_t>* per_class_total) {
  const std::size_t N = logits.n(), K = logits.c();
  std::size_t correct = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = &logits.data[n * K];
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (row[k] > row[best]) best = k;
    }
    if (per_class_total) (*per_class_total)[labels[n]]++;
    if (static_cast<int>(best) == labels[n]) {
      ++correct;
      if (per_class_correct) (*per_class_correct)[labels[n]]++;
    }
  }
  return correct;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                   std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + i,
                         order.begin() + std::min(i + batch_size, n));
  }
  return batches;
}

}  // namespace

double accuracy(const Network& net, const Dataset& ds,
                std::size_t batch_size) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t j = i; j < std::min(i + batch_size, ds.size()); ++j)
      idx.push_back(j);
    Tensor logits = net.forward(ds.batch(idx));
    correct += count_correct(logits, ds.batch_labels(idx), nullptr, nullptr);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

History train(Network& net, const Dataset& train_ds, const Dataset& test_ds,
              const TrainConfig& cfg) {
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("batch_size must be >= 1");
  }
  if (cfg.adversarial) {
    const double f = cfg.adversarial->replace_fraction;
    if (f < 0.0 || f > 1.0) {
      throw std::invalid_argument("replace_fraction must be in [0,1]");
    }
    if (cfg.adversarial->attack.stepsize > cfg.adversarial->attack.epsilon) {
      // warn, not error
      std::fprintf(stderr,
                   "warning: PGD stepsize %g exceeds epsilon %g\n",
                   cfg.adversarial->attack.stepsize,
                   cfg.adversarial->attack.epsilon);
    }
  }

  auto params = net.params();
  std::map<std::string, Tensor> velocity;
  for (const auto& p : params) {
    velocity[p.name] = Tensor(p.value->shape[0], p.value->shape[1],
                              p.value->shape[2], p.value->shape[3]);
  }

  std::mt19937_64 rng(cfg.seed);
  History history;
  BackwardOpts opts;  // STE through the threshold layer during training

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double t0 = now_sec();
    const double lr =
        cfg.learning_rate *
        std::pow(cfg.lr_decay_factor,
                 static_cast<double>(epoch / cfg.lr_decay_interval));
    auto batches = make_batches(train_ds.size(), cfg.batch_size, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tensor batch = train_ds.batch(batches[b]);
      std::vector<int> labels = train_ds.batch_labels(batches[b]);

      if (cfg.adversarial) {
        const std::size_t replace = static_cast<std::size_t>(
            std::floor(cfg.adversarial->replace_fraction *
                       static_cast<double>(batches[b].size())));
        if (replace > 0) {
          std::vector<std::size_t> head_idx(replace);
          std::iota(head_idx.begin(), head_idx.end(), 0);
          const std::size_t plane =
              batch.c() * batch.h() * batch.w();
          Tensor clean_part(replace, batch.c(), batch.h(), batch.w());
          std::copy_n(batch.data.begin(), replace * plane,
                      clean_part.data.begin());
          std::vector<int> part_labels(labels.begin(),
                                       labels.begin() + replace);
          AttackConfig atk = cfg.adversarial->attack;
          atk.grad_mode = GradMode::ste;  // the defender knows the model
          Tensor adv = pgd(net, clean_part, part_labels, atk, rng);
          std::copy_n(adv.data.begin(), replace * plane, batch.data.begin());
        }
      }

      NetCache cache;
      Tensor logits = net.forward(batch, &cache);
      auto [loss, grad_logits] = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss)) {
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(b));
      }
      loss_sum += loss * static_cast<double>(labels.size());
      correct += count_correct(logits, labels, nullptr, nullptr);

      ParamGrads grads = net.backward(cache, grad_logits, opts);
      for (const auto& p : params) {
        Tensor& v = velocity[p.name];
        const Tensor& g = grads.at(p.name);
        for (std::size_t i = 0; i < v.size(); ++i) {
          v.data[i] = cfg.momentum * v.data[i] - lr * g.data[i];
          p.value->data[i] += v.data[i];
        }
      }
      net.project_constraints();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_ds.size());
    stats.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(train_ds.size());
    stats.test_accuracy = accuracy(net, test_ds);
    stats.wall_time_sec = now_sec() - t0;
    history.push_back(stats);
  }
  return history;
}

History adversarial_train(Network& net, const Dataset& train_ds,
                          const Dataset& test_ds, const TrainConfig& cfg) {
  if (!cfg.adversarial) {
    throw std::invalid_argument(
        "adversarial_train requires cfg.adversarial to be set");
  }
  return train(net, train_ds, test_ds, cfg);
}

EvalReport evaluate(const Network& net, const Dataset& ds,
                    const std::vector<AttackConfig>& attacks,
                    std::uint64_t seed, std::size_t batch_size) {
  const double t0 = now_sec();
  EvalReport report;
  report.model = net.name;
  report.dataset = ds.name;
  report.seed = seed;
  report.per_class_correct.assign(ds.class_count, 0);
  report.per_class_total.assign(ds.class_count, 0);

  std::size_t clean_correct = 0;
  for (std::size_t i = 0; i < ds.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t j = i; j < std::min(i + batch_size, ds.size()); ++j)
      idx.push_back(j);
    Tensor logits = net.forward(ds.batch(idx));
    clean_correct += count_correct(logits, ds.batch_labels(idx),
                                   &report.per_class_correct,
                                   &report.per_class_total);
  }
  report.clean_accuracy =
      static_cast<double>(clean_correct) / static_cast<double>(ds.size());

  for (std::size_t a = 0; a < attacks.size(); ++a) {
    std::mt19937_64 rng(seed * 1000003 + a);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); i += batch_size) {
      std::vector<std::size_t> idx;
      for (std::size_t j = i; j < std::min(i + batch_size, ds.size()); ++j)
        idx.push_back(j);
      Tensor x = ds.batch(idx);
      std::vector<int> labels = ds.batch_labels(idx);
      Tensor adv = run_attack(net, x, labels, attacks[a], rng);
      Tensor logits = net.forward(adv);
      correct += count_correct(logits, labels, nullptr, nullptr);
    }
    report.robust.push_back(
        {attacks[a],
         static_cast<double>(correct) / static_cast<double>(ds.size())});
  }
  report.wall_time_sec = now_sec() - t0;
  return report;
}

FeatureDiff feature_diff_metrics(const Network& net, const Tensor& x_clean,
                                 const Tensor& x_adv) {
  if (!net.has_branch()) {
    throw std::invalid_argument(
        "feature_diff_metrics requires a BEFB-integrated network");
  }
  NetCache clean_cache, adv_cache;
  net.forward(x_clean, &clean_cache);
  net.forward(x_adv, &adv_cache);

  FeatureDiff diff;
  const Tensor& tc = clean_cache.backbone_flat;
  const Tensor& ta = adv_cache.backbone_flat;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < tc.size(); ++i) {
    const double d = tc.data[i] - ta.data[i];
    sq_sum += d * d;
  }
  diff.texture_rmse = std::sqrt(sq_sum / static_cast<double>(tc.size()));

  const Tensor& bc = clean_cache.branch_flat;
  const Tensor& ba = adv_cache.branch_flat;
  for (std::size_t i = 0; i < bc.size(); ++i) {
    if (bc.data[i] != ba.data[i]) ++diff.binary_diff_pixels;
  }
  return diff;
}

void write_history_csv(const History& history, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "epoch,train_loss,train_accuracy,test_accuracy,wall_time_sec\n";
  for (const auto& row : history) {
    os << row.epoch << "," << row.train_loss << "," << row.train_accuracy
       << "," << row.test_accuracy << "," << row.wall_time_sec << "\n";
  }
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "model,dataset,attack,epsilon,grad_mode,seed,accuracy\n";
  os << report.model << "," << report.dataset << ",clean,0,none,"
     << report.seed << "," << report.clean_accuracy << "\n";
  for (const auto& r : report.robust) {
    const bool gaussian = r.config.kind == AttackKind::gaussian;
    os << report.model << "," << report.dataset << ","
       << attack_kind_name(r.config.kind) << ","
       << (gaussian ? r.config.sigma : r.config.epsilon) << ","
       << (gaussian ? "none" : grad_mode_name(r.config.grad_mode)) << ","
       << report.seed << "," << r.accuracy << "\n";
  }
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["model"] = report.model;
  j["dataset"] = report.dataset;
  j["clean_accuracy"] = report.clean_accuracy;
  j["seed"] = report.seed;
  j["wall_time_sec"] = report.wall_time_sec;
  j["per_class_correct"] = report.per_class_correct;
  j["per_class_total"] = report.per_class_total;
  j["robust"] = nlohmann::json::array();
  for (const auto& r : report.robust) {
    nlohmann::json entry;
    entry["attack"] = attack_kind_name(r.config.kind);
    entry["epsilon"] = r.config.epsilon;
    entry["steps"] = r.config.steps;
    entry["stepsize"] = r.config.stepsize;
    entry["grad_mode"] = grad_mode_name(r.config.grad_mode);
    entry["sigma"] = r.config.sigma;
    entry["accuracy"] = r.accuracy;
    j["robust"].push_back(entry);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
}

}  // namespace befb
