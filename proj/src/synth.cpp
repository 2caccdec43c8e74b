#include "moedr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "moedr/audio.hpp"
#include "moedr/manifest.hpp"
#include "moedr/rng.hpp"

namespace moedr {

std::string synth_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
  if (spec.n_subjects < 1) throw std::invalid_argument("synth: n_subjects must be >= 1");
  if (spec.class_balance < 0.0 || spec.class_balance > 1.0) {
    throw std::invalid_argument("synth: class_balance must be in [0, 1]");
  }
  std::filesystem::create_directories(out_dir);

  const auto n_control = static_cast<std::int64_t>(std::llround(spec.n_subjects * spec.class_balance));
  const auto n_samples = static_cast<std::int64_t>(std::llround(spec.duration_seconds * feat::kSampleRate));
  RngStream root = RngStream::root(spec.seed);

  std::vector<ManifestEntry> entries;
  for (std::int64_t s = 0; s < spec.n_subjects; ++s) {
    const int cls = s < n_control ? 0 : 1;
    char id[24];
    std::snprintf(id, sizeof(id), "s%03lld", static_cast<long long>(s));
    RngStream subject_rng = root.split(static_cast<std::uint64_t>(s));

    ManifestEntry e;
    e.subject_id = id;
    e.label = cls == 0 ? Label::control : Label::depression;
    for (int task = 0; task < 2; ++task) {
      std::vector<double> samples(static_cast<std::size_t>(n_samples), 0.0);
      for (double tone : SyntheticSpec::kTonesHz[static_cast<std::size_t>(cls)][static_cast<std::size_t>(task)]) {
        const double w = 2.0 * 3.14159265358979323846 * tone / feat::kSampleRate;
        for (std::int64_t i = 0; i < n_samples; ++i) {
          samples[static_cast<std::size_t>(i)] += SyntheticSpec::kToneAmplitude * std::sin(w * static_cast<double>(i));
        }
      }
      if (spec.noise_level > 0.0) {
        for (auto& v : samples) v += spec.noise_level * subject_rng.normal();
      }
      const std::string fname = std::string(id) + (task == 0 ? "_read.wav" : "_int.wav");
      const std::string full = (std::filesystem::path(out_dir) / fname).string();
      write_wav_pcm16(full, samples, feat::kSampleRate);
      (task == 0 ? e.reading_path : e.interview_path) = full;
    }
    entries.push_back(std::move(e));
  }

  const std::string manifest = (std::filesystem::path(out_dir) / "manifest.csv").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace moedr
