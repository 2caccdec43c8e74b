#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "moedr/audio.hpp"
#include "moedr/config.hpp"
#include "moedr/container.hpp"
#include "moedr/encoder.hpp"
#include "moedr/fusion.hpp"
#include "moedr/manifest.hpp"
#include "moedr/moe.hpp"

namespace moedr {

struct SampleFeatures {
  Tensor read;       // 3 x 224 x 224
  Tensor interview;  // 3 x 224 x 224
};

struct SubjectSample {
  std::string subject_id;
  Label label = Label::control;
  SampleFeatures features;
};

using Dataset = std::vector<SubjectSample>;

// The full two-branch network: shared (or separate) encoders, the fusion
// stage, and the classification head.
class Model {
 public:
  Model(const ModelConfig& cfg, RngStream& rng);

  HeadForward forward(const SampleFeatures& s, Mode mode, RngStream* noise_rng) const;

  // Argmax prediction; a logit tie resolves to control.
  int predict(const SampleFeatures& s) const;

  std::vector<Parameter> parameters() const;
  const ModelConfig& config() const { return cfg_; }
  const Head& head() const { return *head_; }

  void export_weights(TensorContainer& c, const std::string& prefix = "") const;
  void import_weights(const TensorContainer& c, const std::string& prefix = "");

 private:
  ModelConfig cfg_;
  std::shared_ptr<Encoder> enc_read_;
  std::shared_ptr<Encoder> enc_interview_;  // same object when shared
  std::optional<BlockFusion> block_;
  std::optional<ConcatFusion> concat_;
  std::optional<Head> head_;
};

// Featurizes every manifest entry (or reads precomputed images from a
// feature container written by `featurize`).
Dataset load_dataset(const std::vector<ManifestEntry>& entries,
                     const TensorContainer* features = nullptr);

std::string feature_entry_name(const std::string& subject_id, Task task);

}  // namespace moedr
