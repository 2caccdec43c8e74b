#pragma once

#include <string>
#include <vector>

#include "moedr/rng.hpp"
#include "moedr/tensor.hpp"

namespace moedr {

struct BlockFusionConfig {
  std::int64_t input_dim_x = 768;
  std::int64_t input_dim_y = 768;
  std::int64_t projected_dim = 256;  // per input
  std::int64_t num_chunks = 8;
  std::int64_t chunk_out_dim = 96;  // num_chunks * chunk_out_dim == output_dim
  std::int64_t output_dim = 768;
  bool normalize = true;  // signed sqrt + L2 before the output projection

  std::int64_t chunk_in_dim() const { return projected_dim / num_chunks; }
};

// Block-term bilinear fusion: both inputs are projected to projected_dim,
// chopped into num_chunks pieces, each pair combined through its own dense
// 3-way core, and the concatenated result (optionally signed-sqrt + L2
// normalized) goes through a final linear layer.
class BlockFusion {
 public:
  BlockFusion(const BlockFusionConfig& cfg, RngStream& rng, std::string prefix = "fusion.");

  Tensor forward(const Tensor& x, const Tensor& y) const;

  // Concatenated per-chunk bilinear outputs before normalization; exposed
  // for the bilinearity checks.
  Tensor chunk_vector(const Tensor& x, const Tensor& y) const;
  // The vector entering the output projection (normalized when enabled).
  Tensor pre_output(const Tensor& x, const Tensor& y) const;

  std::vector<Parameter> parameters() const;
  const BlockFusionConfig& config() const { return cfg_; }

  Parameter proj_x_w, proj_x_b, proj_y_w, proj_y_b;
  std::vector<Parameter> cores;  // num_chunks tensors, chunk_in x chunk_in x chunk_out
  Parameter out_w, out_b;

 private:
  BlockFusionConfig cfg_;
};

// Ablation path: concatenate both embeddings and project back to 768 so
// downstream heads see the same input width.
class ConcatFusion {
 public:
  ConcatFusion(std::int64_t input_dim, std::int64_t output_dim, RngStream& rng,
               std::string prefix = "fusion.");

  Tensor forward(const Tensor& x, const Tensor& y) const;
  std::vector<Parameter> parameters() const { return {w, b}; }

  Parameter w, b;
};

}  // namespace moedr
