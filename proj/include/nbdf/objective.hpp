#pragma once

// Batched training objective: per-sequence losses over a ForwardCache and the
// matching gradient with respect to the model outputs.

#include <span>
#include <stdexcept>
#include <vector>

#include "nbdf/model.hpp"
#include "nbdf/targets.hpp"

namespace nbdf {

struct BatchLoss {
  double sum = 0.0;       // sum of per-frame terms over valid frames
  long long frames = 0;   // number of valid frames
  double mean() const { return frames == 0 ? 0.0 : sum / static_cast<double>(frames); }
};

inline long long valid_frame_count(const std::vector<int>& lengths) {
  long long n = 0;
  for (int len : lengths) n += len;
  return n;
}

/// Evaluates the loss of every sequence in the cache against frame-major
/// targets. When d_output is non-null it is resized and filled with
/// d(sum)/d(output) / normalizer.
template <typename S>
BatchLoss batch_loss(TargetKind kind, const ForwardCache<S>& cache,
                     const std::vector<std::span<const S>>& targets, double lambda,
                     Matrix<S>* d_output, double normalizer = 1.0) {
  const int T = cache.frames, B = cache.batch;
  const int od = static_cast<int>(cache.output.rows());
  const int xd = static_cast<int>(cache.input.rows());
  if (static_cast<int>(targets.size()) != B)
    throw std::invalid_argument("batch_loss: one target sequence per batch column required");
  if (d_output) d_output->setZero(od, static_cast<Eigen::Index>(T) * B);

  std::vector<S> pred(static_cast<std::size_t>(T) * od);
  std::vector<S> input(static_cast<std::size_t>(T) * xd);
  std::vector<S> grad;
  FrameMask valid(static_cast<std::size_t>(T));
  BatchLoss out;
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const Eigen::Index col = static_cast<Eigen::Index>(t) * B + b;
      for (int j = 0; j < od; ++j) pred[static_cast<std::size_t>(t * od + j)] = cache.output(j, col);
      for (int j = 0; j < xd; ++j) input[static_cast<std::size_t>(t * xd + j)] = cache.input(j, col);
      valid[static_cast<std::size_t>(t)] = t < cache.lengths[static_cast<std::size_t>(b)] ? 1 : 0;
    }
    const LossInputs<S> in{pred, targets[static_cast<std::size_t>(b)], input, T, xd / 2};
    if (d_output) grad.assign(pred.size(), S(0));
    out.sum += accumulate_loss<S>(kind, in, lambda, valid, 1.0 / normalizer,
                                  d_output ? std::span<S>(grad) : std::span<S>());
    out.frames += cache.lengths[static_cast<std::size_t>(b)];
    if (d_output) {
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < od; ++j)
          (*d_output)(j, static_cast<Eigen::Index>(t) * B + b) = grad[static_cast<std::size_t>(t * od + j)];
    }
  }
  return out;
}

}  // namespace nbdf
