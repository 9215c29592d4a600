#include <gtest/gtest.h>

#include <random>

#include "nbdf/stft.hpp"

namespace nbdf {
namespace {

TEST(Window, ClosedForms) {
  const auto w4 = make_window(4);
  ASSERT_EQ(w4.size(), 4u);
  EXPECT_NEAR(w4[0], 0.0, 1e-15);
  EXPECT_NEAR(w4[1], 0.5, 1e-15);
  EXPECT_NEAR(w4[2], 1.0, 1e-15);
  EXPECT_NEAR(w4[3], 0.5, 1e-15);
  const auto w2 = make_window(2);
  EXPECT_NEAR(w2[0], 0.0, 1e-15);
  EXPECT_NEAR(w2[1], 1.0, 1e-15);
}

TEST(Window, ConstantOverlapAddAtHalfHop) {
  const auto w = make_window(512);
  for (std::size_t n = 0; n < 256; ++n) EXPECT_NEAR(w[n] + w[n + 256], 1.0, 1e-12);
}

TEST(Window, RejectsOddOrTinySizes) {
  EXPECT_THROW(make_window(3), std::invalid_argument);
  EXPECT_THROW(make_window(0), std::invalid_argument);
  EXPECT_THROW(make_window(-4), std::invalid_argument);
}

AudioBuffer noise(std::size_t len, std::uint64_t seed, int channels = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AudioBuffer a(static_cast<std::size_t>(channels), len);
  for (auto& ch : a.samples)
    for (auto& v : ch) v = u(rng);
  return a;
}

TEST(Stft, FramingAndShape) {
  const auto spec = stft(noise(16000, 1, 2));
  EXPECT_EQ(spec.channels(), 2);
  EXPECT_EQ(spec.bins(), 257);
  EXPECT_EQ(spec.frames(), (16000 - 512) / 256 + 1);
  EXPECT_EQ(frame_count(511), 0);
  EXPECT_EQ(frame_count(512), 1);
  EXPECT_EQ(frame_count(767), 1);
  EXPECT_EQ(frame_count(768), 2);
}

TEST(Stft, ZeroInputGivesZeroSpectrogram) {
  const auto spec = stft(AudioBuffer(1, 2048));
  for (const auto& v : spec.data()) EXPECT_EQ(std::abs(v), 0.0);
  const auto back = istft(spec, 2048);
  for (double v : back.channel(0)) EXPECT_EQ(v, 0.0);
}

TEST(Stft, TooShortSignalIsRejected) {
  EXPECT_THROW(stft(AudioBuffer(1, 511)), std::invalid_argument);
}

TEST(Stft, CosineAtBinCenterPeaksAtThatBin) {
  const int len = 4096;
  AudioBuffer a(1, len);
  for (int n = 0; n < len; ++n) a.samples[0][n] = std::cos(2.0 * std::numbers::pi * 8.0 * n / 512.0);
  const auto spec = stft(a);
  // Direct DFT of the first windowed frame as an independent check.
  const auto w = make_window(512);
  cplx direct8{};
  for (int n = 0; n < 512; ++n) {
    const double ang = -2.0 * std::numbers::pi * 8.0 * n / 512.0;
    direct8 += a.samples[0][n] * w[n] * cplx(std::cos(ang), std::sin(ang));
  }
  EXPECT_NEAR(std::abs(spec.at(0, 8, 0) - direct8), 0.0, 1e-9);
  for (int t = 0; t < spec.frames(); ++t) {
    const double peak = std::abs(spec.at(0, 8, t));
    for (int k = 0; k < spec.bins(); ++k) {
      EXPECT_LE(std::abs(spec.at(0, k, t)), peak);
      if (std::abs(k - 8) > 1) EXPECT_LE(std::abs(spec.at(0, k, t)), 1e-10 * peak) << "k=" << k;
    }
  }
}

TEST(Stft, ConstantSignalConcentratesAtDc) {
  AudioBuffer a(1, 2048);
  for (auto& v : a.samples[0]) v = 1.0;
  const auto spec = stft(a);
  const auto w = make_window(512);
  double wsum = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) wsum += w[n];
  EXPECT_NEAR(wsum, 256.0, 1e-9);
  for (int t = 0; t < spec.frames(); ++t) {
    EXPECT_NEAR(std::abs(spec.at(0, 0, t)), wsum, 1e-9);
    EXPECT_NEAR(std::abs(spec.at(0, 1, t)), 0.5 * wsum, 1e-9);  // Hann leaks into k = 1 only
    for (int k = 2; k < spec.bins(); ++k) EXPECT_LE(std::abs(spec.at(0, k, t)), 1e-9);
  }
}

double interior_rel_rms(const std::vector<double>& x, const std::vector<double>& y, SampleRange r) {
  double e = 0.0, s = 0.0;
  for (std::size_t n = r.begin; n < r.end; ++n) {
    e += (x[n] - y[n]) * (x[n] - y[n]);
    s += x[n] * x[n];
  }
  return std::sqrt(e / s);
}

TEST(Istft, RoundTripOnNoiseIsExactInInterior) {
  const auto a = noise(16000, 7);
  const auto spec = stft(a);
  const auto back = istft(spec, a.length());
  const auto r = interior_range(spec.frames());
  double max_err = 0.0;
  for (std::size_t n = r.begin; n < r.end; ++n)
    max_err = std::max(max_err, std::abs(back.samples[0][n] - a.samples[0][n]));
  EXPECT_LT(max_err, 1e-6);
  EXPECT_LT(interior_rel_rms(a.channel(0), back.channel(0), r), 1e-6);
  // uncovered tail comes back as zeros
  for (std::size_t n = spec.covered_length(); n < a.length(); ++n) EXPECT_EQ(back.samples[0][n], 0.0);
}

TEST(Istft, RoundTripOnChirp) {
  AudioBuffer a(1, 16000);
  for (int n = 0; n < 16000; ++n) {
    const double t = n / 16000.0;
    a.samples[0][n] = 0.5 * std::sin(2.0 * std::numbers::pi * (100.0 * t + 1900.0 * t * t));
  }
  const auto spec = stft(a);
  EXPECT_LT(interior_rel_rms(a.channel(0), istft(spec, a.length()).channel(0), interior_range(spec.frames())), 1e-6);
}

TEST(Istft, RejectsInconsistentFraming) {
  ComplexSpectrogram bad(1, 4, 512, 200);
  EXPECT_THROW(istft(bad, 1000), std::invalid_argument);
}

TEST(Stft, IsLinear) {
  const auto x = noise(4096, 1), y = noise(4096, 2);
  AudioBuffer z(1, 4096);
  for (int n = 0; n < 4096; ++n) z.samples[0][n] = 0.3 * x.samples[0][n] - 1.7 * y.samples[0][n];
  const auto X = stft(x), Y = stft(y), Z = stft(z);
  for (std::size_t i = 0; i < Z.data().size(); ++i)
    EXPECT_NEAR(std::abs(Z.data()[i] - (0.3 * X.data()[i] - 1.7 * Y.data()[i])), 0.0, 1e-12);
}

TEST(Stft, FrameEnergyConstantForStationaryTone) {
  // A tone with an integer number of periods per hop gives identical frames.
  AudioBuffer a(1, 8192);
  for (int n = 0; n < 8192; ++n) a.samples[0][n] = std::sin(2.0 * std::numbers::pi * 5.0 * n / 256.0);
  const auto spec = stft(a);
  auto energy = [&](int t) {
    double e = 0.0;
    for (int k = 0; k < spec.bins(); ++k) e += std::norm(spec.at(0, k, t));
    return e;
  };
  const double e0 = energy(0);
  for (int t = 1; t < spec.frames(); ++t) EXPECT_NEAR(energy(t) / e0, 1.0, 1e-9);
}

}  // namespace
}  // namespace nbdf
