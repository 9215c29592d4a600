#pragma once

// Full-utterance inference: spectrogram -> per-bin normalized sequences ->
// shared model -> per-target reconstruction -> denormalization -> synthesis.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "nbdf/checkpoint.hpp"
#include "nbdf/features.hpp"
#include "nbdf/model.hpp"
#include "nbdf/stft.hpp"
#include "nbdf/targets.hpp"

namespace nbdf {

/// Turns one bin's predictions (frames * out_dim, frame-major) into enhanced
/// complex coefficients:
///   MRM    -> M * x_r              (mask is scale-free)
///   CC     -> mu * (p_re + j p_im)
///   SF/SSF -> mu * sum_i w_i x_i   (x normalized)
inline std::vector<cplx> reconstruct_bin(std::span<const double> prediction,
                                         const NarrowbandSequence& normalized, TargetKind kind) {
  if (!normalized.normalized()) throw std::invalid_argument("reconstruct_bin needs a normalized sequence");
  const int T = normalized.frames();
  const int od = output_dim(kind, normalized.channels());
  if (prediction.size() != static_cast<std::size_t>(T) * od)
    throw std::invalid_argument("prediction length does not match the input sequence");
  const double mu = normalized.mu;
  std::vector<cplx> out(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double* p = prediction.data() + static_cast<std::size_t>(t) * od;
    switch (kind) {
      case TargetKind::kMrm:
        out[static_cast<std::size_t>(t)] = reconstruct_from_mask(p[0], normalized.coeff(t, normalized.ref_channel) * mu);
        break;
      case TargetKind::kCc: out[static_cast<std::size_t>(t)] = mu * cplx(p[0], p[1]); break;
      case TargetKind::kSf:
      case TargetKind::kSsf: {
        const std::span<const double> x(normalized.values.data() + static_cast<std::size_t>(t) * normalized.dim,
                                        static_cast<std::size_t>(normalized.dim));
        out[static_cast<std::size_t>(t)] = mu * apply_spatial_filter<double>(std::span<const double>(p, static_cast<std::size_t>(od)), x);
        break;
      }
    }
  }
  return out;
}

/// Utterance-level normalized sequences for every bin.
inline std::vector<NarrowbandSequence> normalized_bins(const ComplexSpectrogram& X, int ref_channel) {
  std::vector<NarrowbandSequence> out;
  out.reserve(static_cast<std::size_t>(X.bins()));
  for (int k = 0; k < X.bins(); ++k) out.push_back(normalize_sequence(extract_bin_sequence(X, k, ref_channel)));
  return out;
}

/// Runs the model on every sequence. Bins are processed in groups of
/// bins_per_batch, optionally on several threads; each group's output only
/// depends on its own bins.
inline std::vector<std::vector<double>> predict_sequences(const ModelParameters<float>& params,
                                                          const std::vector<NarrowbandSequence>& seqs,
                                                          int threads = 1, int bins_per_batch = 1) {
  std::vector<std::vector<double>> out(seqs.size());
  if (seqs.empty()) return out;
  const int dim = params.arch().input_dim();
  for (const auto& s : seqs) {
    if (s.dim != dim)
      throw std::invalid_argument("input has " + std::to_string(s.channels()) +
                                  " channels but the model expects " + std::to_string(params.arch().channels));
    if (s.frames() != seqs[0].frames()) throw std::invalid_argument("sequences differ in length");
  }
  const int T = seqs[0].frames();
  const std::size_t group = static_cast<std::size_t>(std::max(1, bins_per_batch));
  const std::size_t n_groups = (seqs.size() + group - 1) / group;
  auto work = [&](std::size_t g) {
    const std::size_t lo = g * group, hi = std::min(seqs.size(), lo + group);
    std::vector<std::vector<float>> buf;
    std::vector<std::span<const float>> spans;
    std::vector<int> lengths;
    for (std::size_t i = lo; i < hi; ++i) {
      buf.emplace_back(seqs[i].values.begin(), seqs[i].values.end());
      lengths.push_back(T);
    }
    for (const auto& b : buf) spans.emplace_back(b);
    const auto cache = model_forward(SequenceBatch<float>::from_frame_major(spans, T, dim, lengths), params);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto y = cache.sequence_output(static_cast<int>(i - lo));
      out[i].assign(y.begin(), y.end());
    }
  };
  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(n_groups)));
  if (nt == 1) {
    for (std::size_t g = 0; g < n_groups; ++g) work(g);
  } else {
    std::vector<std::thread> ts;
    for (int t = 0; t < nt; ++t)
      ts.emplace_back([&, t] {
        for (std::size_t g = static_cast<std::size_t>(t); g < n_groups; g += static_cast<std::size_t>(nt)) work(g);
      });
    for (auto& th : ts) th.join();
  }
  return out;
}

/// Assembles the single-channel enhanced spectrogram from per-bin predictions.
inline ComplexSpectrogram assemble_enhanced(const ComplexSpectrogram& X,
                                            const std::vector<NarrowbandSequence>& bins,
                                            const std::vector<std::vector<double>>& predictions,
                                            TargetKind kind) {
  if (bins.size() != static_cast<std::size_t>(X.bins()) || predictions.size() != bins.size())
    throw std::invalid_argument("need one prediction per frequency bin");
  ComplexSpectrogram Y(1, X.frames(), X.frame_len(), X.hop());
  for (int k = 0; k < X.bins(); ++k) {
    const auto s = reconstruct_bin(predictions[static_cast<std::size_t>(k)], bins[static_cast<std::size_t>(k)], kind);
    for (int t = 0; t < X.frames(); ++t) Y.at(0, k, t) = s[static_cast<std::size_t>(t)];
  }
  return Y;
}

struct EnhanceOptions {
  int threads = 1;
  int bins_per_batch = 1;
};

struct EnhanceResult {
  AudioBuffer audio;
  std::vector<double> mu;             // per bin
  std::vector<double> mean_output;    // per bin: mean mask (MRM) or mean |output| otherwise
};

inline void check_compatible(const AudioBuffer& noisy, const Checkpoint& ck) {
  noisy.validate();
  if (noisy.sample_rate != kSampleRate)
    throw std::invalid_argument("input must be sampled at 16000 Hz");
  if (static_cast<int>(noisy.channels()) != ck.arch().channels)
    throw std::invalid_argument("input has " + std::to_string(noisy.channels()) +
                                " channels but the model was trained on " +
                                std::to_string(ck.arch().channels));
}

inline EnhanceResult enhance_utterance_detailed(const AudioBuffer& noisy, const Checkpoint& ck,
                                                const EnhanceOptions& opt = {}) {
  check_compatible(noisy, ck);
  const auto X = stft(noisy);
  const auto bins = normalized_bins(X, ck.ref_channel);
  const auto pred = predict_sequences(ck.params, bins, opt.threads, opt.bins_per_batch);
  EnhanceResult r;
  r.audio = istft(assemble_enhanced(X, bins, pred, ck.arch().target), noisy.length());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    r.mu.push_back(bins[k].mu);
    double acc = 0.0;
    for (double v : pred[k]) acc += std::abs(v);
    r.mean_output.push_back(pred[k].empty() ? 0.0 : acc / static_cast<double>(pred[k].size()));
  }
  return r;
}

inline AudioBuffer enhance_utterance(const AudioBuffer& noisy, const Checkpoint& ck,
                                     const EnhanceOptions& opt = {}) {
  return enhance_utterance_detailed(noisy, ck, opt).audio;
}

/// Frame-synchronous enhancement for unidirectional checkpoints. Each call to
/// push() consumes one multichannel STFT frame (channel-major, K bins per
/// channel) and returns the enhanced frame. Without fixed per-bin mu values
/// the normalization uses the running mean of the reference magnitude up to
/// the current frame.
class StreamingEnhancer {
 public:
  explicit StreamingEnhancer(const Checkpoint& ck, int bins = kFrameLen / 2 + 1,
                             std::optional<std::vector<double>> fixed_mu = std::nullopt)
      : ck_(ck), bins_(bins), fixed_mu_(std::move(fixed_mu)), mag_sum_(static_cast<std::size_t>(bins), 0.0) {
    if (ck.arch().bidirectional)
      throw std::invalid_argument("streaming enhancement requires a unidirectional checkpoint");
    if (fixed_mu_ && fixed_mu_->size() != static_cast<std::size_t>(bins))
      throw std::invalid_argument("need one mu per bin");
    for (int k = 0; k < bins; ++k) models_.emplace_back(ck_.params);
  }

  std::vector<cplx> push(const std::vector<cplx>& frame) {
    const int I = ck_.arch().channels;
    if (frame.size() != static_cast<std::size_t>(I) * bins_)
      throw std::invalid_argument("frame must hold channels * bins coefficients");
    ++frames_;
    std::vector<cplx> out(static_cast<std::size_t>(bins_));
    Vector<float> x(2 * I);
    std::vector<double> xd(static_cast<std::size_t>(2 * I)), yd;
    for (int k = 0; k < bins_; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      mag_sum_[uk] += std::abs(frame[static_cast<std::size_t>(ck_.ref_channel) * bins_ + uk]);
      const double mu = fixed_mu_ ? (*fixed_mu_)[uk] : std::max(kMuFloor, mag_sum_[uk] / static_cast<double>(frames_));
      NarrowbandSequence seq;
      seq.dim = 2 * I;
      seq.mu = mu;
      seq.bin = k;
      seq.ref_channel = ck_.ref_channel;
      seq.valid_frames = 1;
      for (int i = 0; i < I; ++i) {
        const cplx v = frame[static_cast<std::size_t>(i) * bins_ + uk];
        xd[static_cast<std::size_t>(2 * i)] = v.real() / mu;
        xd[static_cast<std::size_t>(2 * i + 1)] = v.imag() / mu;
        x(2 * i) = static_cast<float>(xd[static_cast<std::size_t>(2 * i)]);
        x(2 * i + 1) = static_cast<float>(xd[static_cast<std::size_t>(2 * i + 1)]);
      }
      seq.values = xd;
      const Vector<float> y = models_[uk].step(x);
      yd.assign(y.data(), y.data() + y.size());
      out[uk] = reconstruct_bin(yd, seq, ck_.arch().target)[0];
    }
    return out;
  }

 private:
  const Checkpoint& ck_;
  int bins_;
  std::optional<std::vector<double>> fixed_mu_;
  std::vector<double> mag_sum_;
  std::vector<StreamingModel<float>> models_;
  long long frames_ = 0;
};

}  // namespace nbdf
