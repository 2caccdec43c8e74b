#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace moedr {

enum class InputMode { both, read_only, interview_only };
enum class FusionKind { block, concat, none };
enum class EncoderTopology { tiny, alexnet_like };
enum class HeadKind { sparse_moe, cp_mumoe, tr_mumoe, dense128 };

const char* to_string(InputMode v);
const char* to_string(FusionKind v);
const char* to_string(EncoderTopology v);
const char* to_string(HeadKind v);

// Full architecture + training hyperparameters + ablation switches.
// Defaults follow the reference experimental protocol.
struct ModelConfig {
  InputMode inputs = InputMode::both;
  FusionKind fusion = FusionKind::block;
  EncoderTopology encoder_topology = EncoderTopology::tiny;
  bool encoder_shared = true;
  bool fusion_normalize = true;
  HeadKind head = HeadKind::tr_mumoe;

  std::int64_t embedding_dim = 768;
  std::int64_t n_experts = -1;  // -1: per-head default (4 sparse, 3 mumoe)
  std::int64_t top_k = 3;
  std::int64_t cp_rank = 4;
  std::int64_t tr_rank1 = 4;
  std::int64_t tr_rank2 = 4;
  std::int64_t tr_rank3 = 4;

  double alpha = 0.1;
  double lr = 1e-4;
  std::int64_t epochs = 30;
  std::int64_t batch_size = 8;
  std::int64_t folds = 5;
  std::int64_t runs = 4;
  std::uint64_t seed = 7;

  std::int64_t resolved_experts() const {
    if (n_experts > 0) return n_experts;
    return head == HeadKind::sparse_moe ? 4 : 3;
  }
};

// Default seed when a config omits `seed`: the MOEDR_SEED environment
// variable if set, otherwise 7.
std::uint64_t default_seed();

// Thrown for malformed user input (config keys, CLI values, manifests).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strict flat key-value config: `key = value` lines, `#` comments, quoted
// strings, ints, floats, booleans. Unknown keys are rejected.
ModelConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
ModelConfig parse_config_file(const std::string& path);

// Canonical serialization; parse(serialize(cfg)) == cfg.
std::string serialize_config(const ModelConfig& cfg);

// Checks cross-field constraints (e.g. fusion=none iff a single branch).
void validate_config(const ModelConfig& cfg);

}  // namespace moedr
