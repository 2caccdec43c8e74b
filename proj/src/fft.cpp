#include "moedr/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace moedr {

void fft_radix2(std::vector<std::complex<double>>& data, bool inverse) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("fft_radix2: length must be a power of two");
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = data[i + j];
        std::complex<double> v = data[i + j + len / 2] * w;
        data[i + j] = u + v;
        data[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& v : data) v /= static_cast<double>(n);
  }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x, std::size_t n) {
  std::vector<std::complex<double>> buf(n, {0.0, 0.0});
  const std::size_t m = std::min(n, x.size());
  for (std::size_t i = 0; i < m; ++i) buf[i] = {x[i], 0.0};
  fft_radix2(buf);
  buf.resize(n / 2 + 1);
  return buf;
}

std::size_t dominant_bin(const std::vector<double>& x, std::size_t* fft_size) {
  std::size_t n = 1;
  while (n < x.size()) n <<= 1;
  auto spec = rfft(x, n);
  if (fft_size) *fft_size = n;
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double mag = std::norm(spec[i]);
    if (mag > best_mag) {
      best_mag = mag;
      best = i;
    }
  }
  return best;
}

}  // namespace moedr
