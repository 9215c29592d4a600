#include <gtest/gtest.h>

#include <random>

#include "nbdf/fft.hpp"

namespace nbdf {
namespace {

std::vector<cplx> naive_dft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t m = 0; m < n; ++m) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * m % n) / static_cast<double>(n);
      out[k] += x[m] * cplx(std::cos(ang), std::sin(ang));
    }
  return out;
}

class FftSizes : public ::testing::TestWithParam<int> {};

TEST_P(FftSizes, MatchesNaiveDft) {
  std::mt19937_64 rng(GetParam());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<cplx> x(static_cast<std::size_t>(GetParam()));
  for (auto& v : x) v = {u(rng), u(rng)};
  auto y = x;
  fft_inplace(y);
  const auto ref = naive_dft(x);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(std::abs(y[k] - ref[k]), 0.0, 1e-10);
  ifft_inplace(y);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(std::abs(y[k] - x[k]), 0.0, 1e-12);
}

INSTANTIATE_TEST_SUITE_P(PowersAndOthers, FftSizes, ::testing::Values(1, 2, 8, 64, 3, 12, 17, 100));

TEST(Rfft, RoundTripOddAndEven) {
  for (std::size_t n : {16u, 15u}) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(0.3 * i) + 0.1 * i;
    const auto back = irfft(rfft(x), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
  }
}

TEST(Rfft, RejectsWrongSpectrumSize) {
  std::vector<cplx> half(4);
  EXPECT_THROW(irfft(half, 10), std::invalid_argument);
}

}  // namespace
}  // namespace nbdf
