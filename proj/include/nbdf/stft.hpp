#pragma once

// Short-time Fourier analysis/synthesis with a periodic Hann window at 50%
// overlap. Frame t covers samples [t*hop, t*hop + frame_len); trailing samples
// that do not fill a frame are dropped by analysis and come back as zeros.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nbdf/audio.hpp"
#include "nbdf/fft.hpp"

namespace nbdf {

inline constexpr int kFrameLen = 512;
inline constexpr int kHop = 256;

struct Window {
  std::vector<double> w;
  std::size_t size() const { return w.size(); }
  double operator[](std::size_t n) const { return w[n]; }
};

/// Periodic Hann window, w[n] = 0.5 - 0.5 cos(2 pi n / size).
inline Window make_window(int size) {
  if (size < 2 || size % 2 != 0)
    throw std::invalid_argument("window size must be even and >= 2");
  Window win;
  win.w.resize(static_cast<std::size_t>(size));
  for (int n = 0; n < size; ++n)
    win.w[static_cast<std::size_t>(n)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(size));
  return win;
}

/// Multichannel one-sided STFT coefficients, indexed (channel, bin, frame).
class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(int channels, int frames, int frame_len = kFrameLen, int hop = kHop)
      : channels_(channels), bins_(frame_len / 2 + 1), frames_(frames),
        frame_len_(frame_len), hop_(hop),
        coeffs_(static_cast<std::size_t>(channels) * bins_ * frames) {}

  int channels() const { return channels_; }
  int bins() const { return bins_; }
  int frames() const { return frames_; }
  int frame_len() const { return frame_len_; }
  int hop() const { return hop_; }

  cplx& at(int ch, int k, int t) { return coeffs_[index(ch, k, t)]; }
  const cplx& at(int ch, int k, int t) const { return coeffs_[index(ch, k, t)]; }

  const std::vector<cplx>& data() const { return coeffs_; }
  std::vector<cplx>& data() { return coeffs_; }

  /// Number of samples spanned by the frames.
  std::size_t covered_length() const {
    return frames_ == 0 ? 0
                        : static_cast<std::size_t>((frames_ - 1) * hop_ + frame_len_);
  }

  void validate() const {
    if (frame_len_ < 2 || frame_len_ % 2 != 0 || hop_ * 2 != frame_len_)
      throw std::invalid_argument("spectrogram framing must satisfy frame_len = 2*hop");
    if (bins_ != frame_len_ / 2 + 1)
      throw std::invalid_argument("spectrogram bin count does not match frame length");
    if (channels_ < 1 || frames_ < 0 ||
        coeffs_.size() != static_cast<std::size_t>(channels_) * bins_ * frames_)
      throw std::invalid_argument("spectrogram storage is not rectangular");
  }

 private:
  std::size_t index(int ch, int k, int t) const {
    return (static_cast<std::size_t>(ch) * bins_ + k) * frames_ + t;
  }

  int channels_ = 0;
  int bins_ = 0;
  int frames_ = 0;
  int frame_len_ = kFrameLen;
  int hop_ = kHop;
  std::vector<cplx> coeffs_;
};

inline int frame_count(std::size_t length, int frame_len = kFrameLen, int hop = kHop) {
  if (length < static_cast<std::size_t>(frame_len)) return 0;
  return static_cast<int>((length - frame_len) / hop) + 1;
}

inline ComplexSpectrogram stft(const AudioBuffer& audio, int frame_len = kFrameLen,
                               int hop = kHop) {
  audio.validate();
  if (hop * 2 != frame_len) throw std::invalid_argument("stft requires hop = frame_len/2");
  const Window win = make_window(frame_len);
  if (audio.length() < static_cast<std::size_t>(frame_len))
    throw std::invalid_argument("signal shorter than one STFT frame");
  const int frames = frame_count(audio.length(), frame_len, hop);
  ComplexSpectrogram spec(static_cast<int>(audio.channels()), frames, frame_len, hop);
  std::vector<double> frame(static_cast<std::size_t>(frame_len));
  for (int ch = 0; ch < spec.channels(); ++ch) {
    const auto& x = audio.samples[static_cast<std::size_t>(ch)];
    for (int t = 0; t < frames; ++t) {
      const std::size_t start = static_cast<std::size_t>(t) * hop;
      for (int n = 0; n < frame_len; ++n)
        frame[static_cast<std::size_t>(n)] = x[start + n] * win[static_cast<std::size_t>(n)];
      const auto bins = rfft(frame);
      for (int k = 0; k < spec.bins(); ++k) spec.at(ch, k, t) = bins[static_cast<std::size_t>(k)];
    }
  }
  return spec;
}

/// Squared-window sums below this are clamped in synthesis so that the
/// half-covered first and last hop are attenuated instead of amplified.
inline constexpr double kSynthesisFloor = 1e-2;

/// Weighted overlap-add synthesis with the analysis window:
/// y[n] = sum_t w[n - t*hop] * frame_t[n - t*hop] / max(sum_t w^2, floor).
/// Samples beyond the covered span are zero.
inline AudioBuffer istft(const ComplexSpectrogram& spec, std::size_t out_len) {
  spec.validate();
  const int frame_len = spec.frame_len();
  const int hop = spec.hop();
  const Window win = make_window(frame_len);
  AudioBuffer out(static_cast<std::size_t>(spec.channels()), out_len);
  const std::size_t span = spec.covered_length();
  std::vector<double> norm(span, 0.0);
  for (int t = 0; t < spec.frames(); ++t)
    for (int n = 0; n < frame_len; ++n)
      norm[static_cast<std::size_t>(t) * hop + n] += win[static_cast<std::size_t>(n)] * win[static_cast<std::size_t>(n)];

  std::vector<cplx> half(static_cast<std::size_t>(spec.bins()));
  for (int ch = 0; ch < spec.channels(); ++ch) {
    std::vector<double> acc(span, 0.0);
    for (int t = 0; t < spec.frames(); ++t) {
      for (int k = 0; k < spec.bins(); ++k) half[static_cast<std::size_t>(k)] = spec.at(ch, k, t);
      const auto frame = irfft(half, static_cast<std::size_t>(frame_len));
      const std::size_t start = static_cast<std::size_t>(t) * hop;
      for (int n = 0; n < frame_len; ++n)
        acc[start + n] += frame[static_cast<std::size_t>(n)] * win[static_cast<std::size_t>(n)];
    }
    auto& y = out.samples[static_cast<std::size_t>(ch)];
    const std::size_t lim = std::min(span, out_len);
    for (std::size_t n = 0; n < lim; ++n) y[n] = acc[n] / std::max(norm[n], kSynthesisFloor);
  }
  return out;
}

/// Sample range [begin, end) where every sample is covered by two frames.
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline SampleRange interior_range(int frames, int hop = kHop) {
  if (frames < 2) return {};
  return {static_cast<std::size_t>(hop), static_cast<std::size_t>(frames) * hop};
}

}  // namespace nbdf
