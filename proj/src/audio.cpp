#include "moedr/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "moedr/fft.hpp"

namespace moedr {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / f_sp;
  return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_mel = 15.0;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * f_sp;
  return 1000.0 * std::exp(logstep * (mel - min_log_mel));
}

// Band edge frequencies: n_mels + 2 points, 0 Hz to Nyquist.
std::vector<double> mel_edge_frequencies() {
  const double mel_max = hz_to_mel(feat::kSampleRate / 2.0);
  std::vector<double> edges(feat::kMelBands + 2);
  for (int i = 0; i < feat::kMelBands + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (feat::kMelBands + 1));
  }
  return edges;
}

double triangle_weight(const std::vector<double>& edges, int band, double hz) {
  const double lo = edges[static_cast<std::size_t>(band)];
  const double mid = edges[static_cast<std::size_t>(band) + 1];
  const double hi = edges[static_cast<std::size_t>(band) + 2];
  const double up = (hz - lo) / (mid - lo);
  const double down = (hi - hz) / (hi - mid);
  const double w = std::max(0.0, std::min(up, down));
  return w * 2.0 / (hi - lo);  // Slaney area normalization
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

}  // namespace

const char* task_name(Task t) { return t == Task::reading ? "reading" : "interview"; }

Waveform load_audio(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open audio file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("not a RIFF/WAVE file: " + path);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = read_u32(bytes.data() + pos + 4);
    if (pos + 8 + len > bytes.size()) break;
    if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
      format = read_u16(bytes.data() + pos + 8);
      channels = read_u16(bytes.data() + pos + 10);
      rate = read_u32(bytes.data() + pos + 12);
      bits = read_u16(bytes.data() + pos + 22);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data || rate == 0 || channels == 0) {
    throw std::runtime_error("missing fmt/data chunk in " + path);
  }
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw std::runtime_error("unsupported WAV encoding in " + path +
                             " (need 16-bit PCM or 32-bit float, got format " +
                             std::to_string(format) + "/" + std::to_string(bits) + " bits)");
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_len / (bytes_per_sample * channels);
  std::vector<double> mono(frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * bytes_per_sample;
      if (pcm16) {
        std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        std::uint32_t u = read_u32(p);
        float fv;
        std::memcpy(&fv, &u, 4);
        acc += static_cast<double>(fv);
      }
    }
    mono[f] = acc / channels;
  }

  Waveform w;
  w.sample_rate = feat::kSampleRate;
  w.samples = resample(mono, static_cast<int>(rate), feat::kSampleRate);
  return w;
}

std::vector<double> resample(const std::vector<double>& x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (from_rate == to_rate) return x;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const auto n_in = static_cast<std::int64_t>(x.size());
  const auto n_out = static_cast<std::int64_t>(std::llround(n_in * ratio));
  const double fc = 0.5 * std::min(1.0, ratio);  // anti-alias cutoff, cycles/input-sample
  const double half_width = ratio >= 1.0 ? 32.0 : 32.0 / ratio;

  std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
  for (std::int64_t t = 0; t < n_out; ++t) {
    const double p = t / ratio;
    const auto n0 = static_cast<std::int64_t>(std::ceil(p - half_width));
    const auto n1 = static_cast<std::int64_t>(std::floor(p + half_width));
    double acc = 0.0;
    for (std::int64_t n = std::max<std::int64_t>(n0, 0); n <= std::min(n1, n_in - 1); ++n) {
      const double d = p - static_cast<double>(n);
      const double win = 0.5 + 0.5 * std::cos(kPi * d / half_width);  // Hann taper
      acc += x[static_cast<std::size_t>(n)] * 2.0 * fc * sinc(2.0 * fc * d) * win;
    }
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

void write_wav_pcm16(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  };
  out.write("RIFF", 4);
  put_u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(sample_rate));
  put_u32(static_cast<std::uint32_t>(sample_rate * 2));
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_len);
  for (double s : samples) {
    double clipped = std::max(-1.0, std::min(1.0, s));
    auto v = static_cast<std::int16_t>(std::lrint(clipped * 32767.0));
    put_u16(static_cast<std::uint16_t>(v));
  }
  if (!out) throw std::runtime_error("short write to " + path);
}

std::int64_t log_mel_frames(std::int64_t n_samples) {
  return 1 + n_samples / feat::kHop;
}

Tensor log_mel(const Waveform& w) {
  const auto n = static_cast<std::int64_t>(w.samples.size());
  const std::int64_t pad = feat::kNfft / 2;
  if (n < pad + 1) {
    throw std::invalid_argument("log_mel: waveform shorter than one window after padding (" +
                                std::to_string(n) + " samples, need at least " +
                                std::to_string(pad + 1) + ")");
  }

  // Centered framing over a reflection-padded signal.
  auto padded_at = [&](std::int64_t j) {
    const std::int64_t p = j - pad;
    if (p < 0) return w.samples[static_cast<std::size_t>(-p)];
    if (p >= n) return w.samples[static_cast<std::size_t>(2 * n - 2 - p)];
    return w.samples[static_cast<std::size_t>(p)];
  };

  const std::int64_t frames = log_mel_frames(n);
  const std::int64_t bins = feat::kNfft / 2 + 1;

  std::vector<double> window(feat::kNfft);
  for (int i = 0; i < feat::kNfft; ++i) {
    window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / feat::kNfft);
  }

  const auto edges = mel_edge_frequencies();
  // Dense filterbank rows; most entries are zero but 224 x 1025 doubles is
  // small and keeps the per-frame product a plain dot.
  std::vector<double> fb(static_cast<std::size_t>(feat::kMelBands) * static_cast<std::size_t>(bins), 0.0);
  for (int m = 0; m < feat::kMelBands; ++m) {
    for (std::int64_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * w.sample_rate / feat::kNfft;
      fb[static_cast<std::size_t>(m) * static_cast<std::size_t>(bins) + static_cast<std::size_t>(k)] =
          triangle_weight(edges, m, hz);
    }
  }

  std::vector<double> mel(static_cast<std::size_t>(feat::kMelBands) * static_cast<std::size_t>(frames));
  std::vector<std::complex<double>> buf(feat::kNfft);
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int i = 0; i < feat::kNfft; ++i) {
      buf[static_cast<std::size_t>(i)] = {padded_at(t * feat::kHop + i) * window[static_cast<std::size_t>(i)], 0.0};
    }
    fft_radix2(buf);
    for (std::int64_t k = 0; k < bins; ++k) power[static_cast<std::size_t>(k)] = std::norm(buf[static_cast<std::size_t>(k)]);
    for (int m = 0; m < feat::kMelBands; ++m) {
      const double* row = fb.data() + static_cast<std::size_t>(m) * static_cast<std::size_t>(bins);
      double acc = 0;
      for (std::int64_t k = 0; k < bins; ++k) acc += row[static_cast<std::size_t>(k)] * power[static_cast<std::size_t>(k)];
      mel[static_cast<std::size_t>(m) * static_cast<std::size_t>(frames) + static_cast<std::size_t>(t)] = acc;
    }
  }

  // dB referenced to the matrix maximum, floored 80 dB below the peak.
  double ref = 0.0;
  for (double v : mel) ref = std::max(ref, v);
  const double ref_db = 10.0 * std::log10(std::max(ref, feat::kAmin));
  double peak = -std::numeric_limits<double>::infinity();
  for (double& v : mel) {
    v = 10.0 * std::log10(std::max(v, feat::kAmin)) - ref_db;
    peak = std::max(peak, v);
  }
  const double floor_db = peak - feat::kTopDb;
  for (double& v : mel) v = std::max(v, floor_db);

  return Tensor::from({feat::kMelBands, frames}, std::move(mel));
}

Tensor delta(const Tensor& features, int order) {
  if (features.rank() != 2) throw std::invalid_argument("delta expects a rank-2 tensor");
  if (order != 1 && order != 2) throw std::invalid_argument("delta order must be 1 or 2");
  const std::int64_t b = features.dim(0), t_len = features.dim(1);

  double denom = 0;
  for (int nn = 1; nn <= feat::kDeltaHalfWindow; ++nn) denom += nn * nn;
  denom *= 2.0;

  std::vector<double> cur(features.values());
  std::vector<double> next(cur.size());
  for (int pass = 0; pass < order; ++pass) {
    for (std::int64_t row = 0; row < b; ++row) {
      const double* src = cur.data() + row * t_len;
      double* dst = next.data() + row * t_len;
      for (std::int64_t t = 0; t < t_len; ++t) {
        double acc = 0;
        for (int nn = 1; nn <= feat::kDeltaHalfWindow; ++nn) {
          const std::int64_t hi = std::min<std::int64_t>(t + nn, t_len - 1);
          const std::int64_t lo = std::max<std::int64_t>(t - nn, 0);
          acc += nn * (src[hi] - src[lo]);
        }
        dst[t] = acc / denom;
      }
    }
    cur.swap(next);
  }
  return Tensor::from({b, t_len}, std::move(cur));
}

Tensor resize_bilinear(const Tensor& m, std::int64_t out_h, std::int64_t out_w) {
  if (m.rank() != 2) throw std::invalid_argument("resize_bilinear expects a rank-2 tensor");
  const std::int64_t h = m.dim(0), w = m.dim(1);
  const double* src = m.values().data();
  std::vector<double> out(static_cast<std::size_t>(out_h * out_w));
  // Corner-aligned sampling: source position i * (len-1) / (out_len-1).
  const double rscale = (out_h > 1 && h > 1) ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
  const double cscale = (out_w > 1 && w > 1) ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
  for (std::int64_t r = 0; r < out_h; ++r) {
    const double sr = r * rscale;
    const auto r0 = static_cast<std::int64_t>(sr);
    const std::int64_t r1 = std::min(r0 + 1, h - 1);
    const double fr = sr - r0;
    for (std::int64_t c = 0; c < out_w; ++c) {
      const double sc = c * cscale;
      const auto c0 = static_cast<std::int64_t>(sc);
      const std::int64_t c1 = std::min(c0 + 1, w - 1);
      const double fc = sc - c0;
      const double top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
      const double bot = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
      out[static_cast<std::size_t>(r * out_w + c)] = top * (1.0 - fr) + bot * fr;
    }
  }
  return Tensor::from({out_h, out_w}, std::move(out));
}

Tensor minmax_normalize(const Tensor& m) {
  double lo = m.values()[0], hi = m.values()[0];
  for (double v : m.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out(m.values());
  const double range = hi - lo;
  if (range <= 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
  } else {
    for (double& v : out) v = (v - lo) / range;
  }
  return Tensor::from(m.shape(), std::move(out));
}

FeatureImage make_feature_image(const Waveform& w, Task task) {
  Tensor lm = log_mel(w);
  Tensor d1 = delta(lm, 1);
  Tensor d2 = delta(lm, 2);

  std::vector<double> stacked;
  stacked.reserve(3u * feat::kImageSize * feat::kImageSize);
  for (const Tensor* ch : {&lm, &d1, &d2}) {
    Tensor resized = resize_bilinear(*ch, feat::kImageSize, feat::kImageSize);
    Tensor norm = minmax_normalize(resized);
    stacked.insert(stacked.end(), norm.values().begin(), norm.values().end());
  }
  FeatureImage img;
  img.channels = Tensor::from({3, feat::kImageSize, feat::kImageSize}, std::move(stacked));
  img.task = task;
  return img;
}

std::vector<double> mel_filter_response_at(double hz) {
  const auto edges = mel_edge_frequencies();
  std::vector<double> out(feat::kMelBands);
  for (int m = 0; m < feat::kMelBands; ++m) out[static_cast<std::size_t>(m)] = triangle_weight(edges, m, hz);
  return out;
}

std::vector<double> mel_band_center_frequencies() {
  const auto edges = mel_edge_frequencies();
  std::vector<double> out(feat::kMelBands);
  for (int m = 0; m < feat::kMelBands; ++m) out[static_cast<std::size_t>(m)] = edges[static_cast<std::size_t>(m) + 1];
  return out;
}

}  // namespace moedr
