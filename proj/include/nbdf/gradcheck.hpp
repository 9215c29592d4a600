#pragma once

// Central finite-difference verification of the analytic BPTT gradients on a
// small randomized model. Used by the test suite and the `gradcheck` command.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nbdf/objective.hpp"

namespace nbdf {

struct GradcheckOptions {
  int channels = 2;
  int hidden1 = 5;
  int hidden2 = 4;
  int frames = 7;
  double step = 1e-5;
  double lambda = 1.0;
  /// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 1;
};

struct GradcheckResult {
  TargetKind target = TargetKind::kSf;
  bool bidirectional = false;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_block;
  std::size_t parameters = 0;
};

struct GradcheckProblem {
  ModelParameters<double> params;
  SequenceBatch<double> batch;
  std::vector<std::vector<double>> targets;
  double lambda = 1.0;

  std::vector<std::span<const double>> target_spans() const {
    return {targets.begin(), targets.end()};
  }

  double loss() const {
    const auto cache = model_forward(batch, params);
    const auto l = batch_loss<double>(params.arch().target, cache, target_spans(), lambda, nullptr);
    return l.mean();
  }

  ModelParameters<double> analytic_gradient() const {
    const auto cache = model_forward(batch, params);
    Matrix<double> d_out;
    const double n = static_cast<double>(valid_frame_count(batch.lengths));
    batch_loss<double>(params.arch().target, cache, target_spans(), lambda, &d_out, n);
    ModelParameters<double> g(params.arch());
    model_backward(cache, d_out, params, g);
    return g;
  }
};

/// Two sequences: one full length, one padded by two frames.
inline GradcheckProblem make_gradcheck_problem(TargetKind kind, bool bidirectional,
                                               const GradcheckOptions& opt) {
  Architecture a;
  a.channels = opt.channels;
  a.bidirectional = bidirectional;
  a.hidden1 = opt.hidden1;
  a.hidden2 = opt.hidden2;
  a.target = kind;
  GradcheckProblem pr{init_params<double>(a, opt.seed), {}, {}, opt.lambda};
  std::mt19937_64 rng(opt.seed * 7919 + static_cast<std::uint64_t>(kind) * 31 + (bidirectional ? 1 : 0));
  // Perturb biases too so that no block sits at a symmetric point.
  for (auto& v : pr.params.mutable_values()) v += 0.2 * (2.0 * uniform01(rng) - 1.0);

  const int T = opt.frames, dim = a.input_dim();
  const std::vector<int> lengths = {T, std::max(1, T - 2)};
  std::vector<std::vector<double>> inputs(lengths.size());
  for (auto& seq : inputs) {
    seq.resize(static_cast<std::size_t>(T) * dim);
    for (auto& v : seq) v = 2.0 * uniform01(rng) - 1.0;
  }
  std::vector<std::span<const double>> spans(inputs.begin(), inputs.end());
  pr.batch = SequenceBatch<double>::from_frame_major(spans, T, dim, lengths);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    std::vector<double> y(static_cast<std::size_t>(T) * target_dim(kind));
    for (auto& v : y) v = kind == TargetKind::kMrm ? uniform01(rng) : 2.0 * uniform01(rng) - 1.0;
    pr.targets.push_back(std::move(y));
  }
  return pr;
}

inline GradcheckResult run_gradcheck(TargetKind kind, bool bidirectional,
                                     const GradcheckOptions& opt = {}) {
  GradcheckProblem pr = make_gradcheck_problem(kind, bidirectional, opt);
  const auto analytic = pr.analytic_gradient();
  GradcheckResult res;
  res.target = kind;
  res.bidirectional = bidirectional;
  res.parameters = pr.params.size();
  const auto& layout = pr.params.layout();
  for (const auto& blk : layout) {
    for (std::size_t i = blk.offset; i < blk.offset + blk.size(); ++i) {
      const double orig = pr.params.values()[i];
      pr.params.mutable_values()[i] = orig + opt.step;
      const double lp = pr.loss();
      pr.params.mutable_values()[i] = orig - opt.step;
      const double lm = pr.loss();
      pr.params.mutable_values()[i] = orig;
      const double numeric = (lp - lm) / (2.0 * opt.step);
      const double a = analytic.values()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opt.floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_block = blk.name;
      }
    }
  }
  return res;
}

inline std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opt = {}) {
  std::vector<GradcheckResult> out;
  for (TargetKind k : {TargetKind::kMrm, TargetKind::kCc, TargetKind::kSf, TargetKind::kSsf})
    for (bool bi : {false, true}) out.push_back(run_gradcheck(k, bi, opt));
  return out;
}

}  // namespace nbdf
