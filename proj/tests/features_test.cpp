#include <gtest/gtest.h>

#include <random>

#include "nbdf/features.hpp"

namespace nbdf {
namespace {

ComplexSpectrogram single_bin_spec(const std::vector<std::vector<cplx>>& per_channel) {
  const int frames = static_cast<int>(per_channel[0].size());
  ComplexSpectrogram s(static_cast<int>(per_channel.size()), frames, 4, 2);
  for (std::size_t c = 0; c < per_channel.size(); ++c)
    for (int t = 0; t < frames; ++t) s.at(static_cast<int>(c), 1, t) = per_channel[c][static_cast<std::size_t>(t)];
  return s;
}

TEST(Extract, InterleavesRealAndImaginaryPerChannel) {
  auto one = extract_bin_sequence(single_bin_spec({{cplx(3, 4)}}), 1, 0);
  ASSERT_EQ(one.dim, 2);
  EXPECT_EQ(one.at(0, 0), 3.0);
  EXPECT_EQ(one.at(0, 1), 4.0);

  auto two = extract_bin_sequence(single_bin_spec({{cplx(1, 0)}, {cplx(0, -1)}}), 1, 0);
  ASSERT_EQ(two.dim, 4);
  EXPECT_EQ(two.values, (std::vector<double>{1, 0, 0, -1}));

  auto zero = extract_bin_sequence(ComplexSpectrogram(2, 5, 4, 2), 0, 1);
  for (double v : zero.values) EXPECT_EQ(v, 0.0);
}

TEST(Extract, RejectsOutOfRangeIndices) {
  ComplexSpectrogram s(2, 3, 4, 2);
  EXPECT_THROW(extract_bin_sequence(s, 3, 0), std::invalid_argument);
  EXPECT_THROW(extract_bin_sequence(s, -1, 0), std::invalid_argument);
  EXPECT_THROW(extract_bin_sequence(s, 0, 2), std::invalid_argument);
}

TEST(Normalize, Examples) {
  auto s = normalize_sequence(extract_bin_sequence(single_bin_spec({{cplx(2, 0), cplx(0, 2), cplx(-2, 0)}}), 1, 0));
  EXPECT_DOUBLE_EQ(s.mu, 2.0);
  for (int t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(std::abs(s.coeff(t, 0)), 1.0);

  auto m = normalize_sequence(extract_bin_sequence(single_bin_spec({{cplx(1, 0), cplx(0, 2), cplx(3, 0)}}), 1, 0));
  EXPECT_DOUBLE_EQ(m.mu, 2.0);

  auto z = normalize_sequence(extract_bin_sequence(ComplexSpectrogram(1, 4, 4, 2), 1, 0));
  EXPECT_EQ(z.mu, kMuFloor);
  for (double v : z.values) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, EmptyOrTwiceIsRejected) {
  EXPECT_THROW(normalize_sequence(NarrowbandSequence{}), std::invalid_argument);
  auto s = normalize_sequence(extract_bin_sequence(single_bin_spec({{cplx(1, 1)}}), 1, 0));
  EXPECT_THROW(normalize_sequence(s), std::invalid_argument);
}

NarrowbandSequence random_sequence(int frames, int channels, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  NarrowbandSequence s;
  s.dim = 2 * channels;
  s.valid_frames = frames;
  s.ref_channel = channels - 1;
  s.values.resize(static_cast<std::size_t>(frames) * s.dim);
  for (auto& v : s.values) v = scale * g(rng);
  return s;
}

TEST(Normalize, ScaleEquivarianceProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_sequence(50, 2, seed);
    const double c = 0.01 + 10.0 * static_cast<double>(seed) / 7.0;
    auto scaled = s;
    for (auto& v : scaled.values) v *= c;
    const auto a = normalize_sequence(s), b = normalize_sequence(scaled);
    EXPECT_NEAR(b.mu / a.mu, c, 1e-12 * c);
    for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
    // denormalization recovers the raw sequence
    const auto back = denormalize_sequence(a);
    for (std::size_t i = 0; i < s.values.size(); ++i) EXPECT_NEAR(back.values[i], s.values[i], 1e-14);
  }
}

TEST(Slice, CountsAndStarts) {
  EXPECT_EQ(slice_training_sequences(random_sequence(192, 1, 1)).size(), 1u);
  const auto w = slice_windows(288);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].start, 0);
  EXPECT_EQ(w[1].start, 96);
  EXPECT_EQ(slice_training_sequences(random_sequence(288, 1, 1)).size(), 2u);
  EXPECT_TRUE(slice_windows(0).empty());
}

TEST(Slice, ShortSequenceIsPaddedWithMask) {
  const auto s = random_sequence(100, 2, 3);
  const auto slices = slice_training_sequences(s);
  ASSERT_EQ(slices.size(), 1u);
  EXPECT_EQ(slices[0].frames(), 192);
  EXPECT_EQ(slices[0].valid_frames, 100);
  const auto mask = slices[0].validity_mask();
  for (int t = 0; t < 192; ++t) EXPECT_EQ(mask[static_cast<std::size_t>(t)], t < 100 ? 1 : 0);
  for (int t = 100; t < 192; ++t)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(slices[0].at(t, j), 0.0);
  // mu is computed over the valid frames only
  EXPECT_DOUBLE_EQ(slices[0].mu, reference_mean_magnitude(s));
}

TEST(Slice, EachSliceNormalizedOnItsOwnFrames) {
  const auto s = random_sequence(400, 1, 9);
  for (const auto& sl : slice_training_sequences(s)) {
    double acc = 0.0;
    for (int t = 0; t < sl.frames(); ++t) acc += std::abs(sl.coeff(t, 0));
    EXPECT_NEAR(acc / sl.frames(), 1.0, 1e-12);
  }
}

TEST(Slice, CoverageProperty) {
  for (int len = 192; len < 1200; len += 37) {
    std::vector<int> hits(static_cast<std::size_t>(len), 0);
    for (const auto& w : slice_windows(len))
      for (int t = w.start; t < w.start + w.length; ++t) ++hits[static_cast<std::size_t>(t)];
    const int expected = (len - 192) / 96 + 1;
    EXPECT_EQ(static_cast<int>(slice_windows(len).size()), expected);
    const int covered_end = (expected - 1) * 96 + 192;
    for (int t = 0; t < len; ++t) {
      if (t < covered_end) {
        EXPECT_GE(hits[static_cast<std::size_t>(t)], 1);
        EXPECT_LE(hits[static_cast<std::size_t>(t)], 2);
      } else {
        // tail frames beyond the last full window (< 96 of them) are dropped
        EXPECT_LT(len - covered_end, 96);
      }
    }
  }
}

}  // namespace
}  // namespace nbdf
