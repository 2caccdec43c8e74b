#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "moedr/config.hpp"
#include "moedr/rng.hpp"
#include "moedr/tensor.hpp"

namespace moedr {

enum class Mode { train, eval };

// Sparsely-gated MoE: noisy top-k routing over n two-layer MLP experts,
// a weighted sum of the selected expert outputs, and a shared two-unit
// output layer. Auxiliary importance/load losses balance expert usage.
class SparseMoE {
 public:
  struct Config {
    std::int64_t n = 4;       // experts
    std::int64_t k = 3;       // experts kept by the router
    std::int64_t in = 768;
    std::int64_t hidden = 256;
    std::int64_t out = 128;
  };

  // Taped pieces of one gating pass, kept for the auxiliary losses.
  struct GateOut {
    Tensor gate;         // G(x), n entries, exactly min(k, n) nonzero
    Tensor clean;        // x . W_g
    Tensor noisy;        // H(x) = clean + eps * softplus(x . W_noise)
    Tensor noise_scale;  // softplus(x . W_noise)
  };

  SparseMoE(const Config& cfg, RngStream& rng, std::string prefix = "head.");

  // Noisy top-k gate; eval mode draws no noise. Ties keep the lower index.
  GateOut gate(const Tensor& x, Mode mode, RngStream* noise_rng) const;

  // Weighted expert mixture -> two logits. Zero-gate experts are skipped.
  Tensor forward(const Tensor& x, Mode mode, RngStream* noise_rng,
                 GateOut* gate_out = nullptr) const;

  // Smooth per-expert selection probabilities P_i(x) (normal CDF of the
  // margin over the k-th competitor), used by the load loss.
  Tensor load_probs(const GateOut& g) const;

  std::vector<Parameter> parameters() const;
  std::int64_t expert_param_count() const;  // expert MLPs only
  const Config& config() const { return cfg_; }

  Parameter w_gate, w_noise;
  struct Expert {
    Parameter w1, b1, w2, b2;
  };
  std::vector<Expert> experts;
  Parameter out_w, out_b;

 private:
  Config cfg_;
};

// Batch importance loss: squared CV of summed gate weights.
Tensor importance_loss(const std::vector<Tensor>& gates);

// Batch load loss: squared CV of summed selection probabilities.
Tensor load_loss(const SparseMoE& layer, const std::vector<SparseMoE::GateOut>& gates);

// Multilinear MoE with a dense weight tensor W (N x I x O): entmax expert
// coefficients a = entmax15(G^T z), then y = W x_1 a x_2 z.
class DenseMuMoE {
 public:
  struct Config {
    std::int64_t n = 3;
    std::int64_t in = 768;
    std::int64_t out = 128;
  };

  DenseMuMoE(const Config& cfg, RngStream& rng, std::string prefix = "head.");
  // Builds the layer around an existing weight tensor (oracle hooks).
  DenseMuMoE(const Config& cfg, Parameter weight, Parameter gate, Parameter ow, Parameter ob);

  Tensor coefficients(const Tensor& z) const;
  Tensor mix(const Tensor& z) const;      // y in R^out
  Tensor forward(const Tensor& z) const;  // logits in R^2

  std::vector<Parameter> parameters() const;
  std::int64_t core_param_count() const { return cfg_.n * cfg_.in * cfg_.out; }
  const Config& config() const { return cfg_; }

  Parameter w;  // N x I x O
  Parameter g;  // I x N
  Parameter out_w, out_b;

 private:
  Config cfg_;
};

// CP-factorized muMoE: W = sum_r u_r^(1) o u_r^(2) o u_r^(3); the forward
// pass never materializes the N x I x O tensor.
class CpMuMoE {
 public:
  struct Config {
    std::int64_t n = 3;
    std::int64_t in = 768;
    std::int64_t out = 128;
    std::int64_t rank = 4;
  };

  CpMuMoE(const Config& cfg, RngStream& rng, std::string prefix = "head.");

  Tensor coefficients(const Tensor& z) const;
  Tensor mix(const Tensor& z) const;
  Tensor forward(const Tensor& z) const;

  std::vector<Parameter> parameters() const;
  std::int64_t core_param_count() const { return cfg_.rank * (cfg_.n + cfg_.in + cfg_.out); }
  const Config& config() const { return cfg_; }

  Parameter u1;  // R x N
  Parameter u2;  // R x I
  Parameter u3;  // R x O
  Parameter g;   // I x N
  Parameter out_w, out_b;

 private:
  Config cfg_;
};

// Tensor-Ring muMoE: three 3-way cores closed in a ring.
class TrMuMoE {
 public:
  struct Config {
    std::int64_t n = 3;
    std::int64_t in = 768;
    std::int64_t out = 128;
    std::int64_t r1 = 4, r2 = 4, r3 = 4;
  };

  TrMuMoE(const Config& cfg, RngStream& rng, std::string prefix = "head.");

  Tensor coefficients(const Tensor& z) const;
  Tensor mix(const Tensor& z) const;
  Tensor forward(const Tensor& z) const;

  std::vector<Parameter> parameters() const;
  std::int64_t core_param_count() const {
    return cfg_.r1 * cfg_.n * cfg_.r2 + cfg_.r2 * cfg_.in * cfg_.r3 + cfg_.r3 * cfg_.out * cfg_.r1;
  }
  const Config& config() const { return cfg_; }

  Parameter u1;  // R1 x N x R2
  Parameter u2;  // R2 x I x R3
  Parameter u3;  // R3 x O x R1
  Parameter g;   // I x N
  Parameter out_w, out_b;

 private:
  Config cfg_;
};

// "Removal of MoE layer" ablation: a 128-unit dense layer feeding the same
// two-unit output layer.
class Dense128Head {
 public:
  Dense128Head(std::int64_t in, RngStream& rng, std::string prefix = "head.");

  Tensor forward(const Tensor& z) const;
  std::vector<Parameter> parameters() const { return {w, b, out_w, out_b}; }
  std::int64_t core_param_count() const { return w.size() + b.size(); }

  Parameter w, b, out_w, out_b;
};

struct HeadForward {
  Tensor logits;
  std::optional<SparseMoE::GateOut> gate;  // sparse head only
};

// Uniform wrapper used by the model and the training loop.
class Head {
 public:
  static Head make(const ModelConfig& cfg, RngStream& rng, std::string prefix = "head.");

  HeadForward forward(const Tensor& z, Mode mode, RngStream* noise_rng) const;
  std::vector<Parameter> parameters() const;
  std::int64_t core_param_count() const;
  HeadKind kind() const;

  const SparseMoE* sparse() const { return std::get_if<SparseMoE>(&impl_); }

 private:
  std::variant<SparseMoE, CpMuMoE, TrMuMoE, Dense128Head> impl_;

  template <typename T>
  explicit Head(T&& impl) : impl_(std::forward<T>(impl)) {}
};

// Closed-form core parameter counts (gate matrix and output layer excluded;
// they are reported separately).
std::int64_t head_core_param_count(const ModelConfig& cfg);

}  // namespace moedr
