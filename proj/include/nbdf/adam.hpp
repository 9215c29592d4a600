#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbdf/model.hpp"

namespace nbdf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables global-norm clipping
};

template <typename S>
struct AdamState {
  std::vector<S> m;
  std::vector<S> v;
  long long step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, S(0)), v(n, S(0)) {}
};

/// Global L2 norm of the gradient; throws naming the first block that holds a
/// non-finite value.
template <typename S>
double gradient_norm(const ModelParameters<S>& grads) {
  double acc = 0.0;
  const auto g = grads.values();
  for (const auto& b : grads.layout()) {
    for (std::size_t i = b.offset; i < b.offset + b.size(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i])))
        throw std::runtime_error("non-finite gradient in parameter block '" + b.name +
                                 "' at element " + std::to_string(i - b.offset));
      acc += static_cast<double>(g[i]) * g[i];
    }
  }
  return std::sqrt(acc);
}

/// Bias-corrected Adam update with optional global-norm clipping.
/// Returns the pre-clipping gradient norm.
template <typename S>
double adam_step(ModelParameters<S>& params, const ModelParameters<S>& grads,
                 AdamState<S>& state, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
  const double norm = gradient_norm(grads);
  const double clip = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const auto g = grads.values();
  auto p = params.mutable_values();
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.eps);
  const S sb1 = static_cast<S>(1.0 / bc1), sb2 = static_cast<S>(1.0 / bc2);
  const S sc = static_cast<S>(clip);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const S gi = g[i] * sc;
    state.m[i] = b1 * state.m[i] + (S(1) - b1) * gi;
    state.v[i] = b2 * state.v[i] + (S(1) - b2) * gi * gi;
    const S mhat = state.m[i] * sb1;
    const S vhat = state.v[i] * sb2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  return norm;
}

}  // namespace nbdf
