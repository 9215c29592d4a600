#pragma once

// Per-frequency-bin input sequences: extraction from a multichannel
// spectrogram, level normalization by the reference-channel mean magnitude,
// and slicing into fixed-length overlapping training windows.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nbdf/stft.hpp"

namespace nbdf {

inline constexpr double kMuFloor = 1e-8;
inline constexpr int kTrainSeqLen = 192;

/// One bin's sequence of 2I-dimensional real vectors
/// (Re x_1, Im x_1, ..., Re x_I, Im x_I), frame-major.
struct NarrowbandSequence {
  std::vector<double> values;  // frames() * dim
  int dim = 0;
  double mu = 0.0;  // 0 until normalized
  int bin = 0;
  int ref_channel = 0;
  int valid_frames = 0;  // frames [0, valid_frames) carry data; the rest is padding

  int frames() const { return dim == 0 ? 0 : static_cast<int>(values.size()) / dim; }
  int channels() const { return dim / 2; }
  bool normalized() const { return mu > 0.0; }

  double& at(int t, int j) { return values[static_cast<std::size_t>(t) * dim + j]; }
  double at(int t, int j) const { return values[static_cast<std::size_t>(t) * dim + j]; }

  cplx coeff(int t, int ch) const { return {at(t, 2 * ch), at(t, 2 * ch + 1)}; }

  std::vector<std::uint8_t> validity_mask() const {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(frames()), 0);
    for (int t = 0; t < valid_frames; ++t) m[static_cast<std::size_t>(t)] = 1;
    return m;
  }
};

inline NarrowbandSequence extract_bin_sequence(const ComplexSpectrogram& spec, int bin,
                                               int ref_channel) {
  if (bin < 0 || bin >= spec.bins()) throw std::invalid_argument("bin index out of range");
  if (ref_channel < 0 || ref_channel >= spec.channels())
    throw std::invalid_argument("reference channel out of range");
  NarrowbandSequence seq;
  seq.dim = 2 * spec.channels();
  seq.bin = bin;
  seq.ref_channel = ref_channel;
  seq.valid_frames = spec.frames();
  seq.values.resize(static_cast<std::size_t>(spec.frames()) * seq.dim);
  for (int t = 0; t < spec.frames(); ++t) {
    for (int ch = 0; ch < spec.channels(); ++ch) {
      const cplx v = spec.at(ch, bin, t);
      seq.at(t, 2 * ch) = v.real();
      seq.at(t, 2 * ch + 1) = v.imag();
    }
  }
  return seq;
}

/// Mean reference-channel magnitude over the valid frames, floored at kMuFloor.
inline double reference_mean_magnitude(const NarrowbandSequence& seq) {
  double acc = 0.0;
  for (int t = 0; t < seq.valid_frames; ++t) acc += std::abs(seq.coeff(t, seq.ref_channel));
  return std::max(kMuFloor, acc / static_cast<double>(seq.valid_frames));
}

inline NarrowbandSequence normalize_sequence(NarrowbandSequence seq) {
  if (seq.frames() == 0 || seq.valid_frames == 0)
    throw std::invalid_argument("cannot normalize an empty sequence");
  if (seq.normalized()) throw std::invalid_argument("sequence is already normalized");
  seq.mu = reference_mean_magnitude(seq);
  for (auto& v : seq.values) v /= seq.mu;
  return seq;
}

/// Multiplies a normalized sequence back by its mu.
inline NarrowbandSequence denormalize_sequence(NarrowbandSequence seq) {
  for (auto& v : seq.values) v *= seq.mu;
  seq.mu = 0.0;
  return seq;
}

struct SliceWindow {
  int start = 0;
  int length = 0;  // valid frames in the slice; < T only when the input is shorter than T
};

/// Window placement for training slices: stride T/2, one padded window when L < T.
inline std::vector<SliceWindow> slice_windows(int frames, int seq_len = kTrainSeqLen) {
  std::vector<SliceWindow> out;
  if (frames <= 0) return out;
  if (frames < seq_len) {
    out.push_back({0, frames});
    return out;
  }
  const int stride = seq_len / 2;
  const int count = (frames - seq_len) / stride + 1;
  for (int i = 0; i < count; ++i) out.push_back({i * stride, seq_len});
  return out;
}

/// Copies frames [w.start, w.start + w.length) into a length-seq_len sequence,
/// zero padding the remainder.
inline NarrowbandSequence cut_window(const NarrowbandSequence& seq, SliceWindow w,
                                     int seq_len) {
  NarrowbandSequence out;
  out.dim = seq.dim;
  out.bin = seq.bin;
  out.ref_channel = seq.ref_channel;
  out.valid_frames = w.length;
  out.values.assign(static_cast<std::size_t>(seq_len) * seq.dim, 0.0);
  for (int t = 0; t < w.length; ++t)
    for (int j = 0; j < seq.dim; ++j) out.at(t, j) = seq.at(w.start + t, j);
  return out;
}

/// Splits an unnormalized sequence into normalized training slices of length T.
inline std::vector<NarrowbandSequence> slice_training_sequences(const NarrowbandSequence& seq,
                                                                int seq_len = kTrainSeqLen) {
  std::vector<NarrowbandSequence> out;
  for (const auto& w : slice_windows(seq.frames(), seq_len))
    out.push_back(normalize_sequence(cut_window(seq, w, seq_len)));
  return out;
}

}  // namespace nbdf
