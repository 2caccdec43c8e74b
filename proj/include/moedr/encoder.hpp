#pragma once

#include <memory>
#include <string>
#include <vector>

#include "moedr/audio.hpp"
#include "moedr/config.hpp"
#include "moedr/container.hpp"
#include "moedr/rng.hpp"
#include "moedr/tensor.hpp"

namespace moedr {

struct EncoderConfig {
  EncoderTopology topology = EncoderTopology::tiny;
  std::int64_t embedding_dim = 768;
  bool shared_weights = true;
};

// Maps a 3x224x224 feature image to an embedding. `tiny` is three
// 3x3 conv + relu + maxpool(4) stages (channels 8/16/32) and a linear head;
// `alexnet_like` follows the 5-conv/3-pool AlexNet layout with the final
// classifier layer replaced so the output is embedding_dim wide.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, RngStream& rng, std::string name_prefix = "enc.");

  Tensor forward(const Tensor& image) const;
  Tensor forward(const FeatureImage& img) const { return forward(img.channels); }

  std::vector<Parameter> parameters() const;
  std::int64_t param_count() const;
  const EncoderConfig& config() const { return cfg_; }

  // Overwrites parameters from a container; round trips are bit-exact.
  void import_weights(const TensorContainer& c, const std::string& prefix = "");
  void export_weights(TensorContainer& c, const std::string& prefix = "") const;

 private:
  struct ConvStage {
    Parameter w, b;
    int stride = 1;
    int padding = 0;
    int pool_window = 0;  // 0: no pool
    int pool_stride = 0;
  };
  struct LinearStage {
    Parameter w, b;
    bool relu_after = false;
  };

  EncoderConfig cfg_;
  std::vector<ConvStage> convs_;
  std::vector<LinearStage> linears_;
};

// Runs both branches. With shared weights the two encoders must be the same
// object, so branch gradients accumulate into one parameter set.
std::pair<Tensor, Tensor> encode_pair(const Encoder& enc_read, const Encoder& enc_interview,
                                      const FeatureImage& f_read, const FeatureImage& f_interview);

}  // namespace moedr
