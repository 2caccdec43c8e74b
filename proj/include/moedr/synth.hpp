#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace moedr {

// Desk-scale synthetic corpus: each class carries a disjoint pair of tone
// frequencies per task, so the classes are separable by construction and
// stay at least two mel bands apart after pooling.
struct SyntheticSpec {
  std::int64_t n_subjects = 40;
  double class_balance = 0.5;  // fraction labelled control
  double noise_level = 0.05;   // additive Gaussian noise amplitude
  std::uint64_t seed = 7;
  double duration_seconds = 2.0;

  // [class][task][tone]; task 0 = reading, task 1 = interview.
  static constexpr std::array<std::array<std::array<double, 2>, 2>, 2> kTonesHz = {{
      {{{{400.0, 900.0}}, {{600.0, 1200.0}}}},
      {{{{700.0, 1500.0}}, {{1000.0, 2000.0}}}},
  }};
  static constexpr double kToneAmplitude = 0.3;
};

// Writes WAV files and a manifest into out_dir; returns the manifest path.
// Byte-identical output for identical specs.
std::string synth_dataset(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace moedr
