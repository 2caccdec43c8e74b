#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace moedr {

// In-place iterative radix-2 FFT; the length must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& data, bool inverse = false);

// Real-input forward FFT returning the n/2 + 1 non-redundant bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x, std::size_t n);

// Index of the largest-magnitude bin of a real signal, zero-padded to the
// next power of two. Used by tone-placement checks.
std::size_t dominant_bin(const std::vector<double>& x, std::size_t* fft_size = nullptr);

}  // namespace moedr
