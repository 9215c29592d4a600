#include <gtest/gtest.h>

#include <random>

#include "nbdf/targets.hpp"

namespace nbdf {
namespace {

TEST(Mrm, Examples) {
  EXPECT_DOUBLE_EQ(compute_mrm(1.0, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(compute_mrm(3.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(compute_mrm(0.0, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(compute_mrm(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(compute_mrm(1e-3, 0.0), 1.0);
  EXPECT_THROW(compute_mrm(-1.0, 1.0), std::invalid_argument);
}

TEST(Mrm, RangeAndPhaseProperty) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> mag(0.0, 3.0), ph(-3.1, 3.1);
  for (int i = 0; i < 1000; ++i) {
    const double m = compute_mrm(mag(rng), mag(rng));
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
    const cplx x = std::polar(mag(rng) + 0.1, ph(rng));
    const cplx y = reconstruct_from_mask(m, x);
    EXPECT_NEAR(std::abs(y), m * std::abs(x), 1e-12);
    if (m > 0) EXPECT_NEAR(std::arg(y), std::arg(x), 1e-12);
  }
}

TEST(SpatialFilter, Examples) {
  EXPECT_EQ(apply_spatial_filter({1, 0}, {3, 4}), cplx(3, 4));
  EXPECT_EQ(apply_spatial_filter({0, 1}, {2, 3}), cplx(-3, 2));
  EXPECT_EQ(apply_spatial_filter({1, 0, 1, 0}, {1, 1, 2, -1}), cplx(3, 0));
  EXPECT_EQ(apply_spatial_filter({0, 0, 0, 0}, {5, 6, 7, 8}), cplx(0, 0));
  EXPECT_THROW(apply_spatial_filter({1, 0}, {1, 0, 0, 0}), std::invalid_argument);
}

TEST(SpatialFilter, MatchesComplexMultiplyAccumulate) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const int I = 1 + trial % 6;
    std::vector<double> w(2 * I), x(2 * I);
    for (auto& v : w) v = g(rng);
    for (auto& v : x) v = g(rng);
    std::complex<double> ref{};
    for (int i = 0; i < I; ++i) ref += std::complex<double>(w[2 * i], w[2 * i + 1]) * std::complex<double>(x[2 * i], x[2 * i + 1]);
    EXPECT_LT(std::abs(apply_spatial_filter(w, x) - ref), 1e-12);

    // bilinear in w and x
    std::vector<double> w2(2 * I), sum(2 * I);
    for (auto& v : w2) v = g(rng);
    const double a = g(rng), b = g(rng);
    for (int j = 0; j < 2 * I; ++j) sum[j] = a * w[j] + b * w2[j];
    const auto lhs = apply_spatial_filter(sum, x);
    const auto rhs = a * apply_spatial_filter(w, x) + b * apply_spatial_filter(w2, x);
    EXPECT_LT(std::abs(lhs - rhs), 1e-12);
  }
}

double loss(TargetKind kind, const std::vector<double>& p, const std::vector<double>& y,
            const std::vector<double>& x, int frames, int channels, double lambda = 0.0) {
  const LossInputs<double> in{p, y, x, frames, channels};
  const auto valid = all_valid(frames);
  return training_loss<double>(kind, in, lambda, valid);
}

TEST(Loss, Examples) {
  // MRM: (0.5 - 1)^2 + (0 - 0)^2 over 2 frames
  EXPECT_DOUBLE_EQ(loss(TargetKind::kMrm, {0.5, 0.0}, {1.0, 0.0}, {}, 2, 1), 0.125);
  EXPECT_DOUBLE_EQ(loss(TargetKind::kCc, {1.0, 1.0}, {1.0, 0.0}, {}, 1, 1), 1.0);
  // identity filter on the single channel reproduces x exactly
  EXPECT_DOUBLE_EQ(loss(TargetKind::kSf, {1.0, 0.0}, {2.0, -1.0}, {2.0, -1.0}, 1, 1), 0.0);
  // filter (0.5, 0) halves x = (2, 0), target (2, 0): error 1
  EXPECT_DOUBLE_EQ(loss(TargetKind::kSf, {0.5, 0.0}, {2.0, 0.0}, {2.0, 0.0}, 1, 1), 1.0);
  // two frames, filters differ by (1, 0): penalty lambda * 1 averaged over 2 frames
  const std::vector<double> p{1, 0, 0, 0}, y{1, 0, 0, 0}, x{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(loss(TargetKind::kSsf, p, y, x, 2, 1, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(loss(TargetKind::kSf, p, y, x, 2, 1, 1.0), 0.0);
}

TEST(Loss, SmoothingAddsNonNegativeTermZeroIffConstant) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g;
  const int T = 10, I = 2;
  std::vector<double> p(T * 2 * I), y(T * 2), x(T * 2 * I);
  for (auto& v : p) v = g(rng);
  for (auto& v : y) v = g(rng);
  for (auto& v : x) v = g(rng);
  EXPECT_GT(loss(TargetKind::kSsf, p, y, x, T, I, 0.7), loss(TargetKind::kSf, p, y, x, T, I, 0.7));
  for (int t = 1; t < T; ++t)
    for (int j = 0; j < 2 * I; ++j) p[t * 2 * I + j] = p[j];
  EXPECT_DOUBLE_EQ(loss(TargetKind::kSsf, p, y, x, T, I, 0.7), loss(TargetKind::kSf, p, y, x, T, I, 0.7));
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  const int T = 6, I = 2;
  FrameMask valid{1, 1, 0, 1, 1, 1};
  for (auto kind : {TargetKind::kMrm, TargetKind::kCc, TargetKind::kSf, TargetKind::kSsf}) {
    const int od = output_dim(kind, I), td = target_dim(kind);
    std::vector<double> p(T * od), y(T * td), x(T * 2 * I);
    for (auto& v : p) v = g(rng);
    for (auto& v : y) v = g(rng);
    for (auto& v : x) v = g(rng);
    std::vector<double> grad(p.size(), 0.0);
    LossInputs<double> in{p, y, x, T, I};
    accumulate_loss<double>(kind, in, 0.3, valid, 1.0, grad);
    for (std::size_t j = 0; j < p.size(); ++j) {
      auto pp = p, pm = p;
      pp[j] += 1e-6;
      pm[j] -= 1e-6;
      const double fp = accumulate_loss<double>(kind, {pp, y, x, T, I}, 0.3, valid, 1.0, {});
      const double fm = accumulate_loss<double>(kind, {pm, y, x, T, I}, 0.3, valid, 1.0, {});
      EXPECT_NEAR(grad[j], (fp - fm) / 2e-6, 1e-6) << to_string(kind) << " j=" << j;
    }
    // masked frame 2 receives no gradient
    for (int j = 0; j < od; ++j) EXPECT_EQ(grad[2 * od + j], 0.0);
  }
}

TEST(Loss, MismatchedShapesAreRejected) {
  const std::vector<double> p{1, 0}, y{1, 0, 0, 0};
  const LossInputs<double> in{p, y, {}, 2, 1};
  EXPECT_THROW(training_loss<double>(TargetKind::kCc, in, 0.0, all_valid(2)), std::invalid_argument);
  const LossInputs<double> sf{p, std::span<const double>(y).first(2), {}, 1, 1};
  EXPECT_THROW(training_loss<double>(TargetKind::kSf, sf, 0.0, all_valid(1)), std::invalid_argument);
}

TEST(TargetKind, NamesAndDims) {
  for (auto k : {TargetKind::kMrm, TargetKind::kCc, TargetKind::kSf, TargetKind::kSsf})
    EXPECT_EQ(parse_target(to_string(k)), k);
  EXPECT_THROW(parse_target("irm"), std::invalid_argument);
  EXPECT_EQ(output_dim(TargetKind::kMrm, 4), 1);
  EXPECT_EQ(output_dim(TargetKind::kCc, 4), 2);
  EXPECT_EQ(output_dim(TargetKind::kSf, 4), 8);
  EXPECT_EQ(activation_for(TargetKind::kMrm), Activation::kSigmoid);
  EXPECT_EQ(activation_for(TargetKind::kCc), Activation::kIdentity);
  EXPECT_EQ(activation_for(TargetKind::kSsf), Activation::kTanh);
}

}  // namespace
}  // namespace nbdf
