#pragma once

// Training pool assembly (all bins of all mixtures pooled and shuffled) and the
// shared-parameter training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbdf/adam.hpp"
#include "nbdf/checkpoint.hpp"
#include "nbdf/features.hpp"
#include "nbdf/mixer.hpp"
#include "nbdf/objective.hpp"
#include "nbdf/stft.hpp"

namespace nbdf {

struct TrainConfig {
  TargetKind target = TargetKind::kSf;
  bool bidirectional = true;
  int channels = 4;
  int ref_channel = 0;
  int seq_len = kTrainSeqLen;
  int hidden1 = 256;
  int hidden2 = 128;
  int batch_size = 512;
  int epochs = 10;
  double lr = 1e-3;
  double lambda = 1.0;
  double clip_norm = 5.0;
  double val_fraction = 0.1;
  /// Bins drawn per utterance when building the pool; 0 keeps all K bins.
  int bins_per_utterance = 0;
  /// Sequences per gradient chunk. Chunks are summed in a fixed order, so the
  /// result does not depend on the thread count.
  int chunk_size = 32;
  int threads = 1;
  std::uint64_t seed = 0;

  /// Reduced sizes for laptop-scale runs: hidden 32/16, batch 64.
  static TrainConfig desk_scale() {
    TrainConfig c;
    c.hidden1 = 32;
    c.hidden2 = 16;
    c.batch_size = 64;
    return c;
  }

  Architecture arch() const {
    return {channels, bidirectional, hidden1, hidden2, target};
  }

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
    if (lr < 0.0) throw std::invalid_argument("learning rate must be >= 0");
    if (seq_len < 2) throw std::invalid_argument("sequence length must be >= 2");
    if (ref_channel < 0 || ref_channel >= channels)
      throw std::invalid_argument("reference channel out of range");
    if (chunk_size < 1 || threads < 1) throw std::invalid_argument("chunk_size and threads must be >= 1");
    arch().validate();
  }

  nlohmann::json to_json() const {
    return {{"target", to_string(target)}, {"bidirectional", bidirectional},
            {"channels", channels},        {"ref_channel", ref_channel},
            {"seq_len", seq_len},          {"hidden1", hidden1},
            {"hidden2", hidden2},          {"batch_size", batch_size},
            {"epochs", epochs},            {"lr", lr},
            {"lambda", lambda},            {"clip_norm", clip_norm},
            {"val_fraction", val_fraction}, {"bins_per_utterance", bins_per_utterance},
            {"chunk_size", chunk_size},    {"seed", seed}};
  }

  /// Overrides fields present in j (used for --config files).
  void update_from_json(const nlohmann::json& j) {
    if (j.contains("target")) target = parse_target(j["target"].get<std::string>());
    bidirectional = j.value("bidirectional", bidirectional);
    channels = j.value("channels", channels);
    ref_channel = j.value("ref_channel", ref_channel);
    seq_len = j.value("seq_len", seq_len);
    hidden1 = j.value("hidden1", hidden1);
    hidden2 = j.value("hidden2", hidden2);
    batch_size = j.value("batch_size", batch_size);
    epochs = j.value("epochs", epochs);
    lr = j.value("lr", lr);
    lambda = j.value("lambda", lambda);
    clip_norm = j.value("clip_norm", clip_norm);
    val_fraction = j.value("val_fraction", val_fraction);
    bins_per_utterance = j.value("bins_per_utterance", bins_per_utterance);
    chunk_size = j.value("chunk_size", chunk_size);
    seed = j.value("seed", seed);
  }
};

/// One (utterance, bin, slice) training example: normalized input, target,
/// and the number of valid (unpadded) frames.
struct TrainingItem {
  std::vector<float> input;   // seq_len * 2I
  std::vector<float> target;  // seq_len * target_dim
  int length = 0;
  int utterance = 0;
  int bin = 0;
  int start = 0;
  float mu = 0.0f;
};

struct TrainingPool {
  TargetKind target = TargetKind::kSf;
  int channels = 0;
  int seq_len = kTrainSeqLen;
  std::vector<TrainingItem> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

/// Builds the normalized (input, target) pair for one window of one bin.
/// The clean reference coefficients share the input window's mu.
inline TrainingItem make_training_item(const NarrowbandSequence& noisy_bin,
                                       const NarrowbandSequence& clean_bin, SliceWindow w,
                                       int seq_len, TargetKind kind) {
  const NarrowbandSequence x = normalize_sequence(cut_window(noisy_bin, w, seq_len));
  const int r = noisy_bin.ref_channel;
  TrainingItem item;
  item.length = w.length;
  item.bin = noisy_bin.bin;
  item.start = w.start;
  item.mu = static_cast<float>(x.mu);
  item.input.assign(x.values.begin(), x.values.end());
  const int td = target_dim(kind);
  item.target.assign(static_cast<std::size_t>(seq_len) * td, 0.0f);
  for (int t = 0; t < w.length; ++t) {
    const cplx s = clean_bin.coeff(w.start + t, r);
    if (kind == TargetKind::kMrm) {
      const cplx xr = noisy_bin.coeff(w.start + t, r);
      item.target[static_cast<std::size_t>(t)] = static_cast<float>(compute_mrm(std::abs(s), std::abs(xr)));
    } else {
      item.target[static_cast<std::size_t>(t) * 2] = static_cast<float>(s.real() / x.mu);
      item.target[static_cast<std::size_t>(t) * 2 + 1] = static_cast<float>(s.imag() / x.mu);
    }
  }
  return item;
}

inline std::vector<int> choose_bins(int bins, int wanted, std::mt19937_64& rng) {
  std::vector<int> all(static_cast<std::size_t>(bins));
  std::iota(all.begin(), all.end(), 0);
  if (wanted <= 0 || wanted >= bins) return all;
  for (int i = 0; i < wanted; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(bins - i));
    std::swap(all[static_cast<std::size_t>(i)], all[j]);
  }
  all.resize(static_cast<std::size_t>(wanted));
  std::sort(all.begin(), all.end());
  return all;
}

/// Full-length windows starting every `stride` frames (none if frames < seq_len).
inline std::vector<SliceWindow> strided_windows(int frames, int seq_len, int stride) {
  if (stride < 1) throw std::invalid_argument("window stride must be >= 1");
  std::vector<SliceWindow> out;
  for (int s = 0; s + seq_len <= frames; s += stride) out.push_back({s, seq_len});
  return out;
}

/// window_stride = 0 uses the training slicing (stride T/2, short inputs
/// padded); a positive stride cuts only full-length windows at that spacing.
inline TrainingPool build_training_pool(const std::vector<AudioBuffer>& noisy,
                                        const std::vector<AudioBuffer>& clean,
                                        const TrainConfig& cfg, int window_stride = 0) {
  if (noisy.size() != clean.size())
    throw std::invalid_argument("noisy and clean lists differ in length");
  TrainingPool pool;
  pool.target = cfg.target;
  pool.channels = cfg.channels;
  pool.seq_len = cfg.seq_len;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t u = 0; u < noisy.size(); ++u) {
    const auto& x = noisy[u];
    const auto& s = clean[u];
    if (x.channels() != s.channels() || x.length() != s.length())
      throw std::invalid_argument("mixture " + std::to_string(u) +
                                  ": clean and noisy signals are not aligned");
    if (static_cast<int>(x.channels()) != cfg.channels)
      throw std::invalid_argument("mixture " + std::to_string(u) + " has " +
                                  std::to_string(x.channels()) + " channels, config expects " +
                                  std::to_string(cfg.channels));
    const auto X = stft(x);
    const auto S = stft(s);
    const auto windows = window_stride > 0 ? strided_windows(X.frames(), cfg.seq_len, window_stride)
                                           : slice_windows(X.frames(), cfg.seq_len);
    for (int k : choose_bins(X.bins(), cfg.bins_per_utterance, rng)) {
      const auto xb = extract_bin_sequence(X, k, cfg.ref_channel);
      const auto sb = extract_bin_sequence(S, k, cfg.ref_channel);
      for (const auto& w : windows) {
        auto item = make_training_item(xb, sb, w, cfg.seq_len, cfg.target);
        item.utterance = static_cast<int>(u);
        pool.items.push_back(std::move(item));
      }
    }
  }
  std::shuffle(pool.items.begin(), pool.items.end(), rng);
  return pool;
}

inline TrainingPool build_training_pool(const std::vector<Mixture>& mixtures, const TrainConfig& cfg,
                                        int window_stride = 0) {
  std::vector<AudioBuffer> noisy, clean;
  for (const auto& m : mixtures) {
    noisy.push_back(m.noisy);
    clean.push_back(m.clean);
  }
  return build_training_pool(noisy, clean, cfg, window_stride);
}

struct EpochLog {
  int epoch = 0;
  double mean_train_loss = 0.0;
  double mean_val_loss = std::nan("");
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  int best_val_epoch = 0;
};

namespace detail {

inline SequenceBatch<float> make_batch(const TrainingPool& pool, std::span<const std::size_t> idx) {
  std::vector<std::span<const float>> seqs;
  std::vector<int> lengths;
  for (auto i : idx) {
    seqs.emplace_back(pool.items[i].input);
    lengths.push_back(pool.items[i].length);
  }
  return SequenceBatch<float>::from_frame_major(seqs, pool.seq_len, 2 * pool.channels, lengths);
}

inline std::vector<std::span<const float>> batch_targets(const TrainingPool& pool,
                                                         std::span<const std::size_t> idx) {
  std::vector<std::span<const float>> out;
  for (auto i : idx) out.emplace_back(pool.items[i].target);
  return out;
}

}  // namespace detail

/// Loss (and optionally the gradient) of a set of pool items, computed in
/// fixed-size chunks that may run on several threads. Chunk gradients are
/// summed in chunk order.
inline BatchLoss pool_loss(const TrainingPool& pool, std::span<const std::size_t> idx,
                           const ModelParameters<float>& params, double lambda, int chunk_size,
                           int threads, ModelParameters<float>* grads) {
  long long total_frames = 0;
  for (auto i : idx) total_frames += pool.items[i].length;
  const std::size_t n_chunks = (idx.size() + static_cast<std::size_t>(chunk_size) - 1) / static_cast<std::size_t>(chunk_size);
  std::vector<BatchLoss> losses(n_chunks);
  std::vector<ModelParameters<float>> chunk_grads;
  if (grads) chunk_grads.assign(n_chunks, ModelParameters<float>(params.arch()));

  auto work = [&](std::size_t c) {
    const std::size_t lo = c * static_cast<std::size_t>(chunk_size);
    const std::size_t hi = std::min(idx.size(), lo + static_cast<std::size_t>(chunk_size));
    const auto sub = idx.subspan(lo, hi - lo);
    const auto batch = detail::make_batch(pool, sub);
    const auto cache = model_forward(batch, params);
    Matrix<float> d_out;
    losses[c] = batch_loss<float>(pool.target, cache, detail::batch_targets(pool, sub), lambda,
                                  grads ? &d_out : nullptr, static_cast<double>(std::max<long long>(1, total_frames)));
    if (grads) model_backward(cache, d_out, params, chunk_grads[c]);
  };

  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
  if (nt == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) work(c);
  } else {
    std::vector<std::thread> pool_threads;
    for (int t = 0; t < nt; ++t)
      pool_threads.emplace_back([&, t] {
        for (std::size_t c = static_cast<std::size_t>(t); c < n_chunks; c += static_cast<std::size_t>(nt)) work(c);
      });
    for (auto& th : pool_threads) th.join();
  }

  BatchLoss total;
  for (const auto& l : losses) {
    total.sum += l.sum;
    total.frames += l.frames;
  }
  if (grads) {
    grads->set_zero();
    auto g = grads->mutable_values();
    for (const auto& cg : chunk_grads) {
      const auto v = cg.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += v[i];
    }
  }
  return total;
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains a freshly initialized model on the pool. A val_fraction share of the
/// (already shuffled) pool is held out for reporting only.
inline TrainResult train(const TrainingPool& pool, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (pool.empty()) throw std::invalid_argument("training pool is empty");
  if (pool.channels != cfg.channels || pool.target != cfg.target || pool.seq_len != cfg.seq_len)
    throw std::invalid_argument("training pool was built for a different configuration");

  std::vector<std::size_t> train_idx(pool.size());
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::vector<std::size_t> val_idx;
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(pool.size())));
  if (n_val > 0 && n_val < pool.size()) {
    val_idx.assign(train_idx.end() - static_cast<std::ptrdiff_t>(n_val), train_idx.end());
    train_idx.resize(pool.size() - n_val);
  }

  TrainResult res;
  res.checkpoint.params = init_params<float>(cfg.arch(), cfg.seed);
  res.checkpoint.ref_channel = cfg.ref_channel;
  res.checkpoint.seed = cfg.seed;
  res.checkpoint.config = cfg.to_json();
  ModelParameters<float>& params = res.checkpoint.params;  // the single shared instance
  ModelParameters<float> grads(params.arch());
  AdamState<float> adam(params.size());
  const AdamConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.clip_norm};
  std::mt19937_64 rng(cfg.seed + 1);
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double sum = 0.0;
    long long frames = 0;
    int batch_no = 0;
    for (std::size_t lo = 0; lo < train_idx.size(); lo += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t hi = std::min(train_idx.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> idx(train_idx.data() + lo, hi - lo);
      const auto l = pool_loss(pool, idx, params, cfg.lambda, cfg.chunk_size, cfg.threads, &grads);
      if (!std::isfinite(l.sum))
        throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_no));
      try {
        adam_step(params, grads, adam, acfg);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_no) + ")");
      }
      sum += l.sum;
      frames += l.frames;
    }
    EpochLog log;
    log.epoch = epoch;
    log.mean_train_loss = frames > 0 ? sum / static_cast<double>(frames) : 0.0;
    if (!val_idx.empty()) {
      log.mean_val_loss =
          pool_loss(pool, val_idx, params, cfg.lambda, cfg.chunk_size, cfg.threads, nullptr).mean();
      if (log.mean_val_loss < best_val) {
        best_val = log.mean_val_loss;
        res.best_val_epoch = epoch;
      }
    }
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return res;
}

inline nlohmann::json epoch_log_to_json(const EpochLog& l) {
  nlohmann::json j = {{"epoch", l.epoch}, {"mean_train_loss", l.mean_train_loss}};
  j["mean_val_loss"] = std::isnan(l.mean_val_loss) ? nlohmann::json(nullptr) : nlohmann::json(l.mean_val_loss);
  return j;
}

}  // namespace nbdf
