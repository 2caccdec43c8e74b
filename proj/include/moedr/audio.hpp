#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moedr/tensor.hpp"

namespace moedr {

namespace feat {
constexpr int kSampleRate = 16000;
constexpr int kNfft = 2048;
constexpr int kHop = 512;
constexpr int kMelBands = 224;
constexpr int kImageSize = 224;
constexpr double kTopDb = 80.0;
constexpr double kAmin = 1e-10;
constexpr int kDeltaHalfWindow = 4;  // 9-frame regression window
}  // namespace feat

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = feat::kSampleRate;
};

enum class Task { reading, interview };

const char* task_name(Task t);

struct FeatureImage {
  Tensor channels;  // 3 x 224 x 224: log-Mel, delta, delta-delta
  Task task = Task::reading;
};

// PCM WAV reader (16-bit int or 32-bit float, mono or stereo). Stereo is
// averaged to mono, integer samples scaled to [-1, 1], and the result
// resampled to 16 kHz with a windowed-sinc kernel.
Waveform load_audio(const std::string& path);

// Windowed-sinc resampling; returns the input unchanged when rates match.
std::vector<double> resample(const std::vector<double>& x, int from_rate, int to_rate);

void write_wav_pcm16(const std::string& path, const std::vector<double>& samples, int sample_rate);

// Log-Mel spectrogram (224 x T): centered STFT with reflection padding,
// Hann window, power spectrum through a Slaney-spaced triangular mel
// filterbank, dB-scaled against the matrix maximum with an 80 dB floor.
Tensor log_mel(const Waveform& w);

// Number of STFT frames log_mel produces for `n_samples` input samples.
std::int64_t log_mel_frames(std::int64_t n_samples);

// Local least-squares slope over a 9-frame window with edge replication;
// order 2 applies the operator twice.
Tensor delta(const Tensor& features, int order);

Tensor resize_bilinear(const Tensor& m, std::int64_t out_h, std::int64_t out_w);

// Min-max to [0, 1]; a constant input maps to all zeros.
Tensor minmax_normalize(const Tensor& m);

FeatureImage make_feature_image(const Waveform& w, Task task);

// Triangular filter weights of the 224-band filterbank evaluated at `hz`.
// Exposed so tests can locate the expected peak band independently.
std::vector<double> mel_filter_response_at(double hz);

std::vector<double> mel_band_center_frequencies();

}  // namespace moedr
