#pragma once

// Supervision targets (magnitude ratio mask, complex coefficient, spatial
// filter, smoothed spatial filter), their application to noisy inputs, and
// the per-sequence training loss with its gradient.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbdf/fft.hpp"

namespace nbdf {

inline constexpr double kMaskFloor = 1e-8;

/// Per-frame validity flags (nonzero = frame contributes to the loss).
using FrameMask = std::vector<std::uint8_t>;

enum class TargetKind { kMrm, kCc, kSf, kSsf };

enum class Activation { kSigmoid, kIdentity, kTanh };

inline int output_dim(TargetKind kind, int channels) {
  switch (kind) {
    case TargetKind::kMrm: return 1;
    case TargetKind::kCc: return 2;
    case TargetKind::kSf:
    case TargetKind::kSsf: return 2 * channels;
  }
  return 0;
}

/// Width of the supervision vector per frame (the filter targets are supervised
/// through the filtered coefficient, not the filter itself).
inline int target_dim(TargetKind kind) { return kind == TargetKind::kMrm ? 1 : 2; }

inline Activation activation_for(TargetKind kind) {
  switch (kind) {
    case TargetKind::kMrm: return Activation::kSigmoid;
    case TargetKind::kCc: return Activation::kIdentity;
    default: return Activation::kTanh;
  }
}

inline bool is_filter_target(TargetKind kind) {
  return kind == TargetKind::kSf || kind == TargetKind::kSsf;
}

inline std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::kMrm: return "mrm";
    case TargetKind::kCc: return "cc";
    case TargetKind::kSf: return "sf";
    case TargetKind::kSsf: return "ssf";
  }
  return "?";
}

inline TargetKind parse_target(const std::string& s) {
  if (s == "mrm") return TargetKind::kMrm;
  if (s == "cc") return TargetKind::kCc;
  if (s == "sf") return TargetKind::kSf;
  if (s == "ssf") return TargetKind::kSsf;
  throw std::invalid_argument("unknown target kind '" + s + "' (expected mrm|cc|sf|ssf)");
}

/// min(|s_r| / max(|x_r|, eps), 1).
inline double compute_mrm(double clean_ref_mag, double noisy_ref_mag) {
  if (clean_ref_mag < 0.0 || noisy_ref_mag < 0.0)
    throw std::invalid_argument("magnitudes must be non-negative");
  return std::min(clean_ref_mag / std::max(noisy_ref_mag, kMaskFloor), 1.0);
}

/// Scales the noisy reference coefficient: magnitude times the mask, phase kept.
inline cplx reconstruct_from_mask(double mask, cplx noisy_ref) { return mask * noisy_ref; }

/// s = sum_i w_i x_i as complex products over interleaved (Re, Im) pairs,
/// without conjugating w.
template <typename S>
std::complex<S> apply_spatial_filter(std::span<const S> w, std::span<const S> x) {
  if (w.size() != x.size() || w.size() % 2 != 0)
    throw std::invalid_argument("spatial filter and input must have equal even dimension");
  S re = 0, im = 0;
  for (std::size_t i = 0; i < w.size(); i += 2) {
    re += w[i] * x[i] - w[i + 1] * x[i + 1];
    im += w[i] * x[i + 1] + w[i + 1] * x[i];
  }
  return {re, im};
}

inline cplx apply_spatial_filter(const std::vector<double>& w, const std::vector<double>& x) {
  return apply_spatial_filter<double>(std::span<const double>(w), std::span<const double>(x));
}

/// Frame-major views of one sequence for loss evaluation.
template <typename S>
struct LossInputs {
  std::span<const S> prediction;  // frames * output_dim
  std::span<const S> target;      // frames * target_dim
  std::span<const S> input;       // frames * 2I, needed by filter targets
  int frames = 0;
  int channels = 0;
};

/// Sum of per-frame loss terms over valid frames (the smoothing term counts
/// at t when both t and t-1 are valid). If grad is non-empty, adds
/// scale * d(sum)/d(prediction) into it. Returns the unscaled sum.
template <typename S>
double accumulate_loss(TargetKind kind, const LossInputs<S>& in, double lambda,
                       std::span<const std::uint8_t> valid, double scale, std::span<S> grad) {
  const int od = output_dim(kind, in.channels);
  const int td = target_dim(kind);
  const int xd = 2 * in.channels;
  const auto T = static_cast<std::size_t>(in.frames);
  if (in.prediction.size() != T * od || in.target.size() != T * td || valid.size() != T)
    throw std::invalid_argument("loss inputs have mismatched lengths");
  if (is_filter_target(kind) && in.input.size() != T * xd)
    throw std::invalid_argument("filter loss needs the input sequence");
  if (!grad.empty() && grad.size() != in.prediction.size())
    throw std::invalid_argument("gradient buffer has the wrong size");
  if (lambda < 0.0) throw std::invalid_argument("smoothing weight must be non-negative");
  const bool want_grad = !grad.empty();

  double sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!valid[t]) continue;
    const S* p = in.prediction.data() + t * od;
    const S* y = in.target.data() + t * td;
    switch (kind) {
      case TargetKind::kMrm: {
        const double e = static_cast<double>(p[0]) - y[0];
        sum += e * e;
        if (want_grad) grad[t * od] += static_cast<S>(scale * 2.0 * e);
        break;
      }
      case TargetKind::kCc: {
        const double er = static_cast<double>(p[0]) - y[0];
        const double ei = static_cast<double>(p[1]) - y[1];
        sum += er * er + ei * ei;
        if (want_grad) {
          grad[t * od] += static_cast<S>(scale * 2.0 * er);
          grad[t * od + 1] += static_cast<S>(scale * 2.0 * ei);
        }
        break;
      }
      case TargetKind::kSf:
      case TargetKind::kSsf: {
        const S* x = in.input.data() + t * xd;
        const auto s = apply_spatial_filter<S>(std::span<const S>(p, od), std::span<const S>(x, xd));
        const double er = static_cast<double>(s.real()) - y[0];
        const double ei = static_cast<double>(s.imag()) - y[1];
        sum += er * er + ei * ei;
        if (want_grad) {
          S* g = grad.data() + t * od;
          for (int i = 0; i < od; i += 2) {
            g[i] += static_cast<S>(scale * 2.0 * (er * x[i] + ei * x[i + 1]));
            g[i + 1] += static_cast<S>(scale * 2.0 * (-er * x[i + 1] + ei * x[i]));
          }
        }
        if (kind == TargetKind::kSsf && t > 0 && valid[t - 1]) {
          const S* q = in.prediction.data() + (t - 1) * od;
          double d2 = 0.0;
          for (int i = 0; i < od; ++i) {
            const double d = static_cast<double>(p[i]) - q[i];
            d2 += d * d;
            if (want_grad) {
              grad[t * od + i] += static_cast<S>(scale * 2.0 * lambda * d);
              grad[(t - 1) * od + i] -= static_cast<S>(scale * 2.0 * lambda * d);
            }
          }
          sum += lambda * d2;
        }
        break;
      }
    }
  }
  return sum;
}

/// Per-frame data term (squared mask error or squared coefficient error),
/// without the smoothing penalty. Used for loss-versus-time diagnostics.
template <typename S>
std::vector<double> frame_losses(TargetKind kind, const LossInputs<S>& in) {
  const int od = output_dim(kind, in.channels);
  const int td = target_dim(kind);
  const int xd = 2 * in.channels;
  const auto T = static_cast<std::size_t>(in.frames);
  if (in.prediction.size() != T * od || in.target.size() != T * td)
    throw std::invalid_argument("loss inputs have mismatched lengths");
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const S* p = in.prediction.data() + t * od;
    const S* y = in.target.data() + t * td;
    if (kind == TargetKind::kMrm) {
      const double e = static_cast<double>(p[0]) - y[0];
      out[t] = e * e;
      continue;
    }
    std::complex<double> s(p[0], p[1]);
    if (is_filter_target(kind)) {
      const auto f = apply_spatial_filter<S>(std::span<const S>(p, od),
                                             std::span<const S>(in.input.data() + t * xd, xd));
      s = {static_cast<double>(f.real()), static_cast<double>(f.imag())};
    }
    const double er = s.real() - y[0], ei = s.imag() - y[1];
    out[t] = er * er + ei * ei;
  }
  return out;
}

/// Mean per-frame loss over valid frames of one sequence.
template <typename S>
double training_loss(TargetKind kind, const LossInputs<S>& in, double lambda,
                     std::span<const std::uint8_t> valid) {
  const auto n = std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; });
  if (n == 0) return 0.0;
  return accumulate_loss<S>(kind, in, lambda, valid, 1.0, {}) / static_cast<double>(n);
}

inline FrameMask all_valid(int frames) {
  return FrameMask(static_cast<std::size_t>(frames), 1);
}

}  // namespace nbdf
