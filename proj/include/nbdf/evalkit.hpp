#pragma once

// Evaluation: energy-ratio SDR, loss-versus-time-step curves, spatial-filter
// smoothness, and a delay-and-sum baseline.

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbdf/checkpoint.hpp"
#include "nbdf/mixer.hpp"
#include "nbdf/trainer.hpp"

namespace nbdf {

inline constexpr double kSdrCeiling = 300.0;

/// 10 log10(sum ref^2 / sum (ref - est)^2), capped at 300 dB.
inline double sdr(const std::vector<double>& reference, const std::vector<double>& estimate) {
  if (reference.size() != estimate.size())
    throw std::invalid_argument("sdr: reference and estimate differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    num += reference[n] * reference[n];
    const double e = reference[n] - estimate[n];
    den += e * e;
  }
  if (num <= 0.0) throw std::invalid_argument("sdr: reference has zero energy");
  if (den == 0.0) return kSdrCeiling;
  return std::min(kSdrCeiling, 10.0 * std::log10(num / den));
}

inline double sdr(const AudioBuffer& reference, const AudioBuffer& estimate) {
  if (reference.channels() != 1 || estimate.channels() != 1)
    throw std::invalid_argument("sdr expects mono buffers");
  return sdr(reference.channel(0), estimate.channel(0));
}

/// Averages the channels after removing each channel's delay (same
/// fractional-delay operator as the mixer).
inline AudioBuffer delay_and_sum(const AudioBuffer& noisy, const std::vector<double>& delays) {
  noisy.validate();
  if (delays.size() != noisy.channels())
    throw std::invalid_argument("delay_and_sum: need one delay per channel");
  std::vector<double> out(noisy.length(), 0.0);
  for (std::size_t c = 0; c < noisy.channels(); ++c) {
    const auto aligned = fractional_delay(noisy.channel(c), -delays[c]);
    for (std::size_t n = 0; n < out.size(); ++n) out[n] += aligned[n];
  }
  const double inv = 1.0 / static_cast<double>(noisy.channels());
  for (auto& v : out) v *= inv;
  return AudioBuffer::mono(std::move(out), noisy.sample_rate);
}

/// Model predictions for every item of a pool, frame-major per item.
inline std::vector<std::vector<float>> predict_pool(const ModelParameters<float>& params,
                                                    const TrainingPool& pool, int chunk = 64) {
  std::vector<std::vector<float>> out(pool.size());
  for (std::size_t lo = 0; lo < pool.size(); lo += static_cast<std::size_t>(chunk)) {
    const std::size_t hi = std::min(pool.size(), lo + static_cast<std::size_t>(chunk));
    std::vector<std::span<const float>> seqs;
    std::vector<int> lengths;
    for (std::size_t i = lo; i < hi; ++i) {
      seqs.emplace_back(pool.items[i].input);
      lengths.push_back(pool.items[i].length);
    }
    const auto cache = model_forward(
        SequenceBatch<float>::from_frame_major(seqs, pool.seq_len, 2 * pool.channels, lengths), params);
    for (std::size_t i = lo; i < hi; ++i) out[i] = cache.sequence_output(static_cast<int>(i - lo));
  }
  return out;
}

/// curve[t] = mean over the pool of the per-frame loss at time step t. Every
/// item must be a full, unpadded sequence of the pool's length.
inline std::vector<double> mse_vs_timestep(const Checkpoint& ck, const TrainingPool& pool) {
  if (pool.empty()) throw std::invalid_argument("evaluation pool is empty");
  for (const auto& it : pool.items)
    if (it.length != pool.seq_len)
      throw std::invalid_argument("mse_vs_timestep needs sequences of one fixed length");
  if (pool.target != ck.arch().target || pool.channels != ck.arch().channels)
    throw std::invalid_argument("evaluation pool does not match the checkpoint");
  const auto preds = predict_pool(ck.params, pool);
  std::vector<double> curve(static_cast<std::size_t>(pool.seq_len), 0.0);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const LossInputs<float> in{preds[i], pool.items[i].target, pool.items[i].input, pool.seq_len,
                               pool.channels};
    const auto fl = frame_losses<float>(pool.target, in);
    for (std::size_t t = 0; t < fl.size(); ++t) curve[t] += fl[t];
  }
  for (auto& v : curve) v /= static_cast<double>(pool.size());
  return curve;
}

/// Mean squared frame-to-frame filter change over valid frames t >= 2 of
/// frame-major filter sequences; 0 when no such pair exists.
inline double filter_smoothness(const std::vector<std::vector<float>>& filters,
                                const std::vector<int>& lengths, int dim) {
  double acc = 0.0;
  long long pairs = 0;
  for (std::size_t i = 0; i < filters.size(); ++i) {
    for (int t = 1; t < lengths[i]; ++t) {
      double d2 = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double d = static_cast<double>(filters[i][static_cast<std::size_t>(t * dim + j)]) -
                         filters[i][static_cast<std::size_t>((t - 1) * dim + j)];
        d2 += d * d;
      }
      acc += d2;
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : acc / static_cast<double>(pairs);
}

inline double filter_smoothness(const Checkpoint& ck, const TrainingPool& pool) {
  if (!is_filter_target(ck.arch().target))
    throw std::invalid_argument("filter_smoothness needs a spatial-filter checkpoint (sf or ssf)");
  if (pool.channels != ck.arch().channels)
    throw std::invalid_argument("evaluation pool does not match the checkpoint");
  std::vector<int> lengths;
  for (const auto& it : pool.items) lengths.push_back(it.length);
  return filter_smoothness(predict_pool(ck.params, pool), lengths, ck.arch().output_dim());
}

struct MetricRow {
  std::string utterance;
  std::string metric;
  double value = 0.0;
};

inline void write_results_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "utterance,metric,value\n";
  os.precision(10);
  for (const auto& r : rows) os << r.utterance << ',' << r.metric << ',' << r.value << '\n';
}

/// Mean value per metric.
inline nlohmann::json summarize(const std::vector<MetricRow>& rows) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    acc[r.metric].first += r.value;
    acc[r.metric].second += 1;
  }
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : acc) j[k] = {{"mean", v.first / v.second}, {"count", v.second}};
  return j;
}

inline void write_curve_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "timestep,loss\n";
  os.precision(10);
  for (std::size_t t = 0; t < curve.size(); ++t) os << t << ',' << curve[t] << '\n';
}

}  // namespace nbdf
