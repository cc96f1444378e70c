#pragma once

// Minibatch SGD with momentum, step learning-rate schedule and L2 weight
// decay; balanced cover/stego batching over cached residual features;
// evaluation, metrics log, and majority-vote ensembling.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stegokit/checkpoint.hpp"
#include "stegokit/error.hpp"
#include "stegokit/model.hpp"
#include "stegokit/parallel.hpp"
#include "stegokit/residual.hpp"
#include "stegokit/rng.hpp"
#include "stegokit/stego_sim.hpp"

namespace stegokit {

struct TrainConfig {
  double base_lr = 0.01;
  double gamma = 0.9;
  long stepsize = 5000;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 64;
  long max_iter = 200000;
  std::uint64_t seed = 1;
  long eval_every = 1000;
  long checkpoint_every = 0;     // 0: final checkpoint only
  double target_accuracy = 0.0;  // > 0: stop at the first evaluation reaching it
  bool shuffle_labels = false;   // null-experiment control

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw InvalidArgument("invalid training configuration: " + what);
    };
    need(base_lr > 0 && std::isfinite(base_lr), "base_lr must be positive");
    need(gamma > 0 && gamma <= 1, "gamma must be in (0, 1]");
    need(stepsize > 0, "stepsize must be positive");
    need(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
    need(weight_decay >= 0, "weight_decay must be non-negative");
    need(batch_size >= 2 && batch_size % 2 == 0, "batch_size must be even and >= 2");
    need(max_iter > 0, "max_iter must be positive");
    need(eval_every > 0, "eval_every must be positive");
    need(checkpoint_every >= 0, "checkpoint_every must be non-negative");
    need(target_accuracy >= 0 && target_accuracy <= 1, "target_accuracy must be in [0, 1]");
  }

  json to_json() const {
    return {{"base_lr", base_lr},           {"gamma", gamma},
            {"stepsize", stepsize},         {"momentum", momentum},
            {"weight_decay", weight_decay}, {"batch_size", batch_size},
            {"max_iter", max_iter},         {"seed", seed},
            {"eval_every", eval_every},     {"checkpoint_every", checkpoint_every},
            {"target_accuracy", target_accuracy}, {"shuffle_labels", shuffle_labels}};
  }
};

/// base_lr * gamma^floor(iter / stepsize).
inline double lr_at(long iter, const TrainConfig& cfg) {
  if (iter < 0) throw InvalidArgument("iteration must be non-negative");
  return cfg.base_lr * std::pow(cfg.gamma, static_cast<double>(iter / cfg.stepsize));
}

/// v <- momentum*v - lr*(g + wd*w); w <- w + v. Decay only where p.decay.
template <class T>
void sgd_step(std::span<nn::ParamRef<T>> params, const TrainConfig& cfg, long iter) {
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size() || p.value.size() != p.velocity.size())
      throw InvalidArgument("sgd_step: shape mismatch in " + p.name);
    for (T g : p.grad)
      if (!std::isfinite(g))
        throw DivergenceError("non-finite gradient in " + p.name + " at iteration " + std::to_string(iter), p.name, iter);
  }
  const T lr = static_cast<T>(lr_at(iter, cfg));
  const T mom = static_cast<T>(cfg.momentum);
  for (auto& p : params) {
    const T wd = p.decay ? static_cast<T>(cfg.weight_decay) : T{0};
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.velocity[i] = mom * p.velocity[i] - lr * (p.grad[i] + wd * p.value[i]);
      p.value[i] += p.velocity[i];
    }
  }
}

template <class T>
void sgd_step(std::vector<nn::ParamRef<T>>& params, const TrainConfig& cfg, long iter) {
  sgd_step(std::span<nn::ParamRef<T>>(params), cfg, iter);
}

// ---- metrics ---------------------------------------------------------------

struct Metrics {
  long iteration = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double cover_acc = 0.0;
  double stego_acc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;  // wall clock since training started
};

inline constexpr const char* kMetricsHeader = "iteration,train_loss,test_accuracy,cover_acc,stego_acc,lr,seconds";

inline std::string metrics_row(const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%ld,%.6f,%.6f,%.6f,%.6f,%.8g,%.3f", m.iteration, m.train_loss, m.test_accuracy,
                m.cover_acc, m.stego_acc, m.lr, m.seconds);
  return buf;
}

/// CSV with a "# config: {...}" line ahead of the header.
class MetricsLog {
 public:
  MetricsLog() = default;
  MetricsLog(const std::filesystem::path& path, const json& config) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path);
    if (!out_) throw IoError("cannot write metrics log " + path.string());
    out_ << "# config: " << config.dump() << "\n" << kMetricsHeader << "\n";
    out_.flush();
  }
  void append(const Metrics& m) {
    if (!out_.is_open()) return;
    out_ << metrics_row(m) << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---- features --------------------------------------------------------------

/// Residual stacks of every cover and stego in a split, cached compactly.
/// Image 2i is the cover of pair i and image 2i+1 its stego.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(std::span<const LoadedPair> pairs, const nn::HybridConfig& cfg)
      : groups_(cfg.groups()), channels_(cfg.kernel_size * cfg.kernel_size) {
    for (const auto& s : cfg.qt)
      if (s.threshold > 127) throw InvalidConfiguration("Q&T thresholds above 127 are not supported");
    const auto bank = dct_basis(cfg.kernel_size);
    images_.resize(2 * pairs.size());
    pair_ids_.reserve(pairs.size());
    for (const auto& p : pairs) pair_ids_.push_back(p.pair_id);
    if (!pairs.empty()) size_ = pairs.front().cover.width();
    parallel_for(images_.size(), [&](std::size_t i) {
      const auto& pair = pairs[i / 2];
      const DctGrid& grid = i % 2 == 0 ? pair.cover : pair.stego;
      if (grid.width() != size_ || grid.height() != size_)
        throw InvalidArgument("all images in a split must be " + std::to_string(size_) + "x" + std::to_string(size_));
      const auto stack = front_stage(decompress(grid), bank, cfg.qt);
      auto& dst = images_[i];
      dst.reserve(per_image());
      for (const auto& group : stack.groups)
        for (const auto& map : group)
          for (std::int16_t v : map.values()) dst.push_back(static_cast<std::int8_t>(v));
    });
  }

  std::size_t image_count() const noexcept { return images_.size(); }
  std::size_t pair_count() const noexcept { return images_.size() / 2; }
  int image_size() const noexcept { return size_; }
  static int label(std::size_t image) noexcept { return static_cast<int>(image % 2); }
  int pair_id(std::size_t pair) const { return pair_ids_.at(pair); }

  /// One (n, k*k, size, size) tensor per Q&T group for the listed images.
  template <class T>
  std::vector<nn::Tensor4<T>> gather(std::span<const std::size_t> images) const {
    if (images.empty()) throw InvalidArgument("empty batch");
    std::vector<nn::Tensor4<T>> out;
    const std::size_t plane = static_cast<std::size_t>(channels_) * size_ * size_;
    for (int g = 0; g < groups_; ++g) out.emplace_back(static_cast<int>(images.size()), channels_, size_, size_);
    for (std::size_t b = 0; b < images.size(); ++b) {
      const auto& src = images_.at(images[b]);
      for (int g = 0; g < groups_; ++g) {
        T* dst = out[g].item(static_cast<int>(b));
        const std::int8_t* s = src.data() + g * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(s[i]);
      }
    }
    return out;
  }

 private:
  std::size_t per_image() const { return static_cast<std::size_t>(groups_) * channels_ * size_ * size_; }

  int groups_ = 0, channels_ = 0, size_ = 0;
  std::vector<std::vector<std::int8_t>> images_;
  std::vector<int> pair_ids_;
};

// ---- evaluation ------------------------------------------------------------

struct Evaluation {
  double accuracy = 0.0, cover_acc = 0.0, stego_acc = 0.0;
  std::vector<int> predicted;  // per image, bank order
};

/// Accuracy of `predicted` against the bank labels (cover 0, stego 1).
inline Evaluation score(std::vector<int> predicted) {
  if (predicted.empty() || predicted.size() % 2 != 0) throw InvalidArgument("predictions must cover whole pairs");
  std::size_t covers = 0, stegos = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (FeatureBank::label(i) == 0) covers += predicted[i] == 0;
    else stegos += predicted[i] == 1;
  }
  const double half = static_cast<double>(predicted.size() / 2);
  return {(covers + stegos) / (2 * half), covers / half, stegos / half, std::move(predicted)};
}

/// Argmax predictions of an eval-mode model (ties go to cover).
inline Evaluation evaluate(nn::HybridModel<float>& model, const FeatureBank& bank, int batch = 64) {
  if (bank.image_count() == 0) throw InvalidArgument("cannot evaluate on an empty split");
  std::vector<int> predicted(bank.image_count());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < bank.image_count(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(bank.image_count(), start + batch); ++i) idx.push_back(i);
    const auto logits = model.forward(bank.gather<float>(idx), nn::Mode::eval);
    for (std::size_t b = 0; b < idx.size(); ++b)
      predicted[idx[b]] = logits(static_cast<int>(b), 1, 0, 0) > logits(static_cast<int>(b), 0, 0, 0) ? 1 : 0;
  }
  return score(std::move(predicted));
}

/// Per-image majority label over an odd number of voters.
inline std::vector<int> ensemble_vote(const std::vector<std::vector<int>>& predictions) {
  if (predictions.empty() || predictions.size() % 2 == 0)
    throw InvalidArgument("majority voting needs an odd number of models, got " + std::to_string(predictions.size()));
  const std::size_t n = predictions.front().size();
  for (const auto& p : predictions)
    if (p.size() != n) throw InvalidArgument("all voters must predict the same number of images");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t stego = 0;
    for (const auto& p : predictions) {
      if (p[i] != 0 && p[i] != 1) throw InvalidArgument("labels must be 0 (cover) or 1 (stego)");
      stego += p[i];
    }
    out[i] = 2 * stego > predictions.size() ? 1 : 0;
  }
  return out;
}

// ---- training --------------------------------------------------------------

/// Throws IntegrityError if a pair id or cover content occurs in both splits.
inline void check_disjoint(std::span<const LoadedPair> train, std::span<const LoadedPair> test) {
  if (train.empty() || test.empty()) throw InvalidArgument("training needs non-empty train and test splits");
  std::set<int> ids;
  std::set<std::string> covers;
  for (const auto& p : train) {
    ids.insert(p.pair_id);
    covers.insert(content_hash(encode_jcg(p.cover)));
  }
  for (const auto& p : test) {
    if (ids.count(p.pair_id)) throw IntegrityError("pair " + std::to_string(p.pair_id) + " is in both splits");
    if (covers.count(content_hash(encode_jcg(p.cover))))
      throw IntegrityError("cover of test pair " + std::to_string(p.pair_id) + " also appears in the training split");
  }
}

struct TrainOutputs {
  std::filesystem::path metrics_csv;  // empty: no log file
  std::filesystem::path checkpoint;   // final checkpoint; empty: none
  json run_config = json::object();   // embedded in the log and checkpoints
  std::function<void(const Metrics&)> on_eval;
};

struct TrainResult {
  std::vector<Metrics> history;
  long iterations = 0;
  bool reached_target = false;

  const Metrics& last() const { return history.back(); }
  double best_accuracy() const {
    double best = 0;
    for (const auto& m : history) best = std::max(best, m.test_accuracy);
    return best;
  }
};

/// Pair order for batches: concatenated seeded permutations of the training
/// pairs, so every batch holds batch_size/2 covers and their stegos.
class PairStream {
 public:
  PairStream(std::size_t pairs, std::uint64_t seed) : rng_(seed), order_(pairs), pos_(pairs) {
    for (std::size_t i = 0; i < pairs; ++i) order_[i] = i;
  }
  std::size_t next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(std::span<std::size_t>(order_));
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

inline TrainResult train(nn::HybridModel<float>& model, const FeatureBank& train_bank, const FeatureBank& test_bank,
                         const TrainConfig& cfg, const TrainOutputs& out = {}) {
  cfg.validate();
  if (train_bank.pair_count() == 0 || test_bank.pair_count() == 0)
    throw InvalidArgument("training needs non-empty train and test splits");
  const std::size_t pairs_per_batch = cfg.batch_size / 2;
  if (train_bank.pair_count() < pairs_per_batch)
    throw InvalidArgument("training split has fewer pairs than a batch needs");

  json config = out.run_config;
  config["train"] = cfg.to_json();
  config["model"] = nn::to_json(model.config());
  config["model_seed"] = model.seed();
  MetricsLog log = out.metrics_csv.empty() ? MetricsLog() : MetricsLog(out.metrics_csv, config);

  // Shuffled-label control: per pair, a seeded coin decides whether the
  // labels of cover and stego are swapped. Batches stay balanced.
  std::vector<char> swapped(train_bank.pair_count(), 0);
  if (cfg.shuffle_labels) {
    Rng coin(derive_seed(cfg.seed, 0x5eed1abe1ULL));
    for (auto& s : swapped) s = coin.coin();
  }

  PairStream stream(train_bank.pair_count(), derive_seed(cfg.seed, 0xba7c4e5ULL));
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  std::vector<std::size_t> images(cfg.batch_size);
  std::vector<int> labels(cfg.batch_size);
  double loss_sum = 0.0;
  long loss_count = 0;
  auto params = model.params();

  auto save = [&](const std::filesystem::path& path, long iteration) {
    save_checkpoint(path, model, {iteration, config});
  };

  for (long iter = 0; iter < cfg.max_iter; ++iter) {
    for (std::size_t k = 0; k < pairs_per_batch; ++k) {
      const std::size_t pair = stream.next();
      images[2 * k] = 2 * pair;
      images[2 * k + 1] = 2 * pair + 1;
      labels[2 * k] = swapped[pair] ? 1 : 0;
      labels[2 * k + 1] = swapped[pair] ? 0 : 1;
    }
    model.zero_grad();
    const auto logits = model.forward(train_bank.gather<float>(images), nn::Mode::train);
    const auto lg = nn::softmax_xent(logits, std::span<const int>(labels));
    if (!std::isfinite(lg.loss))
      throw DivergenceError("non-finite loss at iteration " + std::to_string(iter), "loss", iter);
    model.backward(lg.grad);
    sgd_step(params, cfg, iter);
    loss_sum += lg.loss;
    ++loss_count;

    const long done = iter + 1;
    const bool last = done == cfg.max_iter;
    if (done % cfg.eval_every == 0 || last) {
      const auto ev = evaluate(model, test_bank);
      Metrics m{done,
                loss_sum / loss_count,
                ev.accuracy,
                ev.cover_acc,
                ev.stego_acc,
                lr_at(iter, cfg),
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
      loss_sum = 0.0;
      loss_count = 0;
      result.history.push_back(m);
      log.append(m);
      if (out.on_eval) out.on_eval(m);
      if (cfg.target_accuracy > 0 && m.test_accuracy >= cfg.target_accuracy) {
        result.reached_target = true;
        result.iterations = done;
        break;
      }
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && !out.checkpoint.empty()) {
      auto path = out.checkpoint;
      path.replace_filename(out.checkpoint.stem().string() + "_iter" + std::to_string(done) +
                            out.checkpoint.extension().string());
      save(path, done);
    }
    result.iterations = done;
  }
  if (!out.checkpoint.empty()) save(out.checkpoint, result.iterations);
  return result;
}

/// Audits the split, builds the feature caches and trains.
inline TrainResult train(nn::HybridModel<float>& model, const LoadedDataset& data, const TrainConfig& cfg,
                         const TrainOutputs& out = {}) {
  audit_manifest(data.manifest);
  check_disjoint(data.train, data.test);
  const FeatureBank train_bank(data.train, model.config());
  const FeatureBank test_bank(data.test, model.config());
  return train(model, train_bank, test_bank, cfg, out);
}

}  // namespace stegokit
