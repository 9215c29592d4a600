#pragma once

// Complex FFT for arbitrary lengths: iterative radix-2 for powers of two,
// Bluestein's chirp-z algorithm otherwise.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace nbdf {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place radix-2 transform. sign = -1 forward, +1 inverse (unscaled).
inline void fft_pow2(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    // Twiddles computed directly rather than by recurrence to keep the
    // error at machine precision for long transforms.
    std::vector<cplx> tw(half);
    for (std::size_t k = 0; k < half; ++k)
      tw[k] = cplx(std::cos(ang * static_cast<double>(k)),
                   std::sin(ang * static_cast<double>(k)));
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + half] * tw[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

inline void fft_bluestein(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small.
    const auto k2 = static_cast<double>((k * k) % (2 * n));
    const double ang = sign * std::numbers::pi * k2 / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::vector<cplx> x(m, cplx{}), y(m, cplx{});
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  y[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);
  fft_pow2(x, -1);
  fft_pow2(y, -1);
  for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
  fft_pow2(x, +1);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * scale * chirp[k];
}

}  // namespace detail

/// Unnormalized forward DFT: X[k] = sum_n x[n] exp(-2 pi i k n / N).
inline void fft_inplace(std::vector<cplx>& a) {
  if (a.size() <= 1) return;
  if (detail::is_pow2(a.size()))
    detail::fft_pow2(a, -1);
  else
    detail::fft_bluestein(a, -1);
}

/// Inverse DFT including the 1/N factor.
inline void ifft_inplace(std::vector<cplx>& a) {
  if (a.size() <= 1) return;
  if (detail::is_pow2(a.size()))
    detail::fft_pow2(a, +1);
  else
    detail::fft_bluestein(a, +1);
  const double scale = 1.0 / static_cast<double>(a.size());
  for (auto& v : a) v *= scale;
}

/// One-sided spectrum (N/2+1 bins) of a real signal.
inline std::vector<cplx> rfft(std::span<const double> x) {
  std::vector<cplx> a(x.begin(), x.end());
  fft_inplace(a);
  a.resize(x.size() / 2 + 1);
  return a;
}

/// Inverse of rfft for a length-n real signal. Imaginary parts of the DC
/// and (for even n) Nyquist bins are ignored.
inline std::vector<double> irfft(std::span<const cplx> half, std::size_t n) {
  if (half.size() != n / 2 + 1)
    throw std::invalid_argument("irfft: spectrum size does not match length");
  std::vector<cplx> a(n);
  for (std::size_t k = 0; k < half.size(); ++k) a[k] = half[k];
  a[0] = cplx(a[0].real(), 0.0);
  if (n % 2 == 0) a[n / 2] = cplx(a[n / 2].real(), 0.0);
  for (std::size_t k = half.size(); k < n; ++k) a[k] = std::conj(half[n - k]);
  ifft_inplace(a);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i].real();
  return out;
}

}  // namespace nbdf
