#include "moedr/moe.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "moedr/init.hpp"
#include "moedr/ops.hpp"

namespace moedr {

namespace {

Parameter dense(RngStream& rng, const std::string& name, Shape shape, double fan_in, double fan_out) {
  return Parameter::create(shape, glorot_uniform(rng, numel(shape), fan_in, fan_out), name);
}

Parameter zeros_param(const std::string& name, Shape shape) {
  return Parameter::create(shape, std::vector<double>(static_cast<std::size_t>(numel(shape)), 0.0), name);
}

// Indices of the k largest entries; ties keep the lower index.
std::vector<std::int64_t> topk_indices(const std::vector<double>& v, std::int64_t k) {
  std::vector<std::int64_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    return v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(std::min<std::int64_t>(k, static_cast<std::int64_t>(v.size()))));
  return idx;
}

// The k-th highest value's index when entry `exclude` is removed. Requires
// k < n; ties keep the lower index.
std::int64_t kth_excluding_index(const std::vector<double>& v, std::int64_t k, std::int64_t exclude) {
  std::vector<std::int64_t> idx;
  idx.reserve(v.size() - 1);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(v.size()); ++i) {
    if (i != exclude) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    return v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)];
  });
  return idx[static_cast<std::size_t>(k - 1)];
}

// The output layer starts at zero so early logits are driven by the
// learned class signal rather than init noise.
std::pair<Parameter, Parameter> make_out_layer(std::int64_t in, const std::string& prefix) {
  return {zeros_param(prefix + "out.w", {2, in}), zeros_param(prefix + "out.b", {2})};
}

}  // namespace

SparseMoE::SparseMoE(const Config& cfg, RngStream& rng, std::string prefix) : cfg_(cfg) {
  if (cfg.k < 1 || cfg.k > cfg.n) throw std::invalid_argument("sparse moe: need 1 <= k <= n");
  w_gate = dense(rng, prefix + "w_gate", {cfg.in, cfg.n}, static_cast<double>(cfg.in), static_cast<double>(cfg.n));
  w_noise = dense(rng, prefix + "w_noise", {cfg.in, cfg.n}, static_cast<double>(cfg.in), static_cast<double>(cfg.n));
  for (std::int64_t i = 0; i < cfg.n; ++i) {
    const std::string ep = prefix + "expert" + std::to_string(i) + ".";
    Expert e;
    e.w1 = dense(rng, ep + "w1", {cfg.hidden, cfg.in}, static_cast<double>(cfg.in), static_cast<double>(cfg.hidden));
    e.b1 = zeros_param(ep + "b1", {cfg.hidden});
    e.w2 = dense(rng, ep + "w2", {cfg.out, cfg.hidden}, static_cast<double>(cfg.hidden), static_cast<double>(cfg.out));
    e.b2 = zeros_param(ep + "b2", {cfg.out});
    experts.push_back(std::move(e));
  }
  auto [ow, ob] = make_out_layer(cfg.out, prefix);
  out_w = std::move(ow);
  out_b = std::move(ob);
}

SparseMoE::GateOut SparseMoE::gate(const Tensor& x, Mode mode, RngStream* noise_rng) const {
  GateOut g;
  g.clean = contract(x, w_gate.value, {{0, 0}});          // x . W_g
  g.noise_scale = softplus(contract(x, w_noise.value, {{0, 0}}));
  if (mode == Mode::train) {
    if (!noise_rng) throw std::invalid_argument("sparse gate: train mode needs a noise stream");
    std::vector<double> eps(static_cast<std::size_t>(cfg_.n));
    for (auto& e : eps) e = noise_rng->normal();
    Tensor eps_t = Tensor::from({cfg_.n}, std::move(eps));
    g.noisy = add(g.clean, mul(eps_t, g.noise_scale));
  } else {
    g.noisy = g.clean;
  }
  auto keep_idx = topk_indices(g.noisy.values(), cfg_.k);
  std::vector<bool> keep(static_cast<std::size_t>(cfg_.n), false);
  for (auto i : keep_idx) keep[static_cast<std::size_t>(i)] = true;
  g.gate = softmax(mask_to_neginf(g.noisy, keep), 0);
  return g;
}

Tensor SparseMoE::forward(const Tensor& x, Mode mode, RngStream* noise_rng,
                          GateOut* gate_out) const {
  GateOut g = gate(x, mode, noise_rng);
  Tensor y;
  for (std::int64_t i = 0; i < cfg_.n; ++i) {
    if (g.gate.value_at(i) <= 0.0) continue;  // unselected experts never run
    const Expert& e = experts[static_cast<std::size_t>(i)];
    Tensor h = relu(linear(x, e.w1.value, e.b1.value));
    Tensor o = linear(h, e.w2.value, e.b2.value);
    Tensor weighted = mul_bcast(o, gather(g.gate, i));
    y = y.defined() ? add(y, weighted) : weighted;
  }
  Tensor logits = linear(y, out_w.value, out_b.value);
  if (gate_out) *gate_out = std::move(g);
  return logits;
}

Tensor SparseMoE::load_probs(const GateOut& g) const {
  if (cfg_.k >= cfg_.n) {
    // Every expert is always selected; the load is constant.
    return Tensor::full({cfg_.n}, 1.0);
  }
  std::vector<Tensor> probs;
  probs.reserve(static_cast<std::size_t>(cfg_.n));
  for (std::int64_t i = 0; i < cfg_.n; ++i) {
    const std::int64_t j = kth_excluding_index(g.noisy.values(), cfg_.k, i);
    Tensor margin = sub(gather(g.clean, i), gather(g.noisy, j));
    probs.push_back(normal_cdf(div(margin, gather(g.noise_scale, i))));
  }
  return concat(probs);
}

std::vector<Parameter> SparseMoE::parameters() const {
  std::vector<Parameter> out = {w_gate, w_noise};
  for (const auto& e : experts) {
    out.push_back(e.w1);
    out.push_back(e.b1);
    out.push_back(e.w2);
    out.push_back(e.b2);
  }
  out.push_back(out_w);
  out.push_back(out_b);
  return out;
}

std::int64_t SparseMoE::expert_param_count() const {
  std::int64_t n = 0;
  for (const auto& e : experts) n += e.w1.size() + e.b1.size() + e.w2.size() + e.b2.size();
  return n;
}

Tensor importance_loss(const std::vector<Tensor>& gates) {
  if (gates.empty()) throw std::invalid_argument("importance_loss: empty batch");
  Tensor imp = gates[0];
  for (std::size_t i = 1; i < gates.size(); ++i) imp = add(imp, gates[i]);
  return cv_squared(imp);
}

Tensor load_loss(const SparseMoE& layer, const std::vector<SparseMoE::GateOut>& gates) {
  if (gates.empty()) throw std::invalid_argument("load_loss: empty batch");
  Tensor load = layer.load_probs(gates[0]);
  for (std::size_t i = 1; i < gates.size(); ++i) load = add(load, layer.load_probs(gates[i]));
  return cv_squared(load);
}

DenseMuMoE::DenseMuMoE(const Config& cfg, RngStream& rng, std::string prefix) : cfg_(cfg) {
  w = dense(rng, prefix + "w", {cfg.n, cfg.in, cfg.out}, static_cast<double>(cfg.in), static_cast<double>(cfg.out));
  g = dense(rng, prefix + "gate", {cfg.in, cfg.n}, static_cast<double>(cfg.in), static_cast<double>(cfg.n));
  auto [ow, ob] = make_out_layer(cfg.out, prefix);
  out_w = std::move(ow);
  out_b = std::move(ob);
}

DenseMuMoE::DenseMuMoE(const Config& cfg, Parameter weight, Parameter gate, Parameter ow, Parameter ob)
    : w(std::move(weight)), g(std::move(gate)), out_w(std::move(ow)), out_b(std::move(ob)), cfg_(cfg) {}

Tensor DenseMuMoE::coefficients(const Tensor& z) const {
  return entmax15(contract(g.value, z, {{0, 0}}), 0);
}

Tensor DenseMuMoE::mix(const Tensor& z) const {
  Tensor a = coefficients(z);
  Tensor per_expert = contract(w.value, z, {{1, 0}});  // N x O
  return contract(per_expert, a, {{0, 0}});            // O
}

Tensor DenseMuMoE::forward(const Tensor& z) const {
  return linear(mix(z), out_w.value, out_b.value);
}

std::vector<Parameter> DenseMuMoE::parameters() const { return {w, g, out_w, out_b}; }

CpMuMoE::CpMuMoE(const Config& cfg, RngStream& rng, std::string prefix) : cfg_(cfg) {
  u1 = dense(rng, prefix + "u1", {cfg.rank, cfg.n}, static_cast<double>(cfg.n), static_cast<double>(cfg.rank));
  u2 = dense(rng, prefix + "u2", {cfg.rank, cfg.in}, static_cast<double>(cfg.in), static_cast<double>(cfg.rank));
  u3 = dense(rng, prefix + "u3", {cfg.rank, cfg.out}, static_cast<double>(cfg.rank), static_cast<double>(cfg.out));
  g = dense(rng, prefix + "gate", {cfg.in, cfg.n}, static_cast<double>(cfg.in), static_cast<double>(cfg.n));
  auto [ow, ob] = make_out_layer(cfg.out, prefix);
  out_w = std::move(ow);
  out_b = std::move(ob);
}

Tensor CpMuMoE::coefficients(const Tensor& z) const {
  return entmax15(contract(g.value, z, {{0, 0}}), 0);
}

Tensor CpMuMoE::mix(const Tensor& z) const {
  Tensor a = coefficients(z);
  Tensor ta = contract(u1.value, a, {{1, 0}});  // R
  Tensor tz = contract(u2.value, z, {{1, 0}});  // R
  return contract(u3.value, mul(ta, tz), {{0, 0}});  // O
}

Tensor CpMuMoE::forward(const Tensor& z) const {
  return linear(mix(z), out_w.value, out_b.value);
}

std::vector<Parameter> CpMuMoE::parameters() const { return {u1, u2, u3, g, out_w, out_b}; }

TrMuMoE::TrMuMoE(const Config& cfg, RngStream& rng, std::string prefix) : cfg_(cfg) {
  u1 = dense(rng, prefix + "u1", {cfg.r1, cfg.n, cfg.r2}, static_cast<double>(cfg.n), static_cast<double>(cfg.r1 * cfg.r2));
  u2 = dense(rng, prefix + "u2", {cfg.r2, cfg.in, cfg.r3}, static_cast<double>(cfg.in), static_cast<double>(cfg.r2 * cfg.r3));
  u3 = dense(rng, prefix + "u3", {cfg.r3, cfg.out, cfg.r1}, static_cast<double>(cfg.r3 * cfg.r1), static_cast<double>(cfg.out));
  g = dense(rng, prefix + "gate", {cfg.in, cfg.n}, static_cast<double>(cfg.in), static_cast<double>(cfg.n));
  auto [ow, ob] = make_out_layer(cfg.out, prefix);
  out_w = std::move(ow);
  out_b = std::move(ob);
}

Tensor TrMuMoE::coefficients(const Tensor& z) const {
  return entmax15(contract(g.value, z, {{0, 0}}), 0);
}

Tensor TrMuMoE::mix(const Tensor& z) const {
  Tensor a = coefficients(z);
  Tensor am = contract(u1.value, a, {{1, 0}});  // R1 x R2
  Tensor zm = contract(u2.value, z, {{1, 0}});  // R2 x R3
  Tensor m = contract(am, zm, {{1, 0}});        // R1 x R3
  // Ring closure: y_o = sum_{r3, r1} U3[r3, o, r1] * M[r1, r3].
  return contract(u3.value, m, {{0, 1}, {2, 0}});
}

Tensor TrMuMoE::forward(const Tensor& z) const {
  return linear(mix(z), out_w.value, out_b.value);
}

std::vector<Parameter> TrMuMoE::parameters() const { return {u1, u2, u3, g, out_w, out_b}; }

Dense128Head::Dense128Head(std::int64_t in, RngStream& rng, std::string prefix) {
  w = dense(rng, prefix + "dense.w", {128, in}, static_cast<double>(in), 128.0);
  b = zeros_param(prefix + "dense.b", {128});
  auto [ow, ob] = make_out_layer(128, prefix);
  out_w = std::move(ow);
  out_b = std::move(ob);
}

Tensor Dense128Head::forward(const Tensor& z) const {
  return linear(linear(z, w.value, b.value), out_w.value, out_b.value);
}

Head Head::make(const ModelConfig& cfg, RngStream& rng, std::string prefix) {
  const std::int64_t n = cfg.resolved_experts();
  switch (cfg.head) {
    case HeadKind::sparse_moe: {
      SparseMoE::Config c;
      c.n = n;
      c.k = cfg.top_k;
      c.in = cfg.embedding_dim;
      return Head(SparseMoE(c, rng, prefix));
    }
    case HeadKind::cp_mumoe: {
      CpMuMoE::Config c;
      c.n = n;
      c.in = cfg.embedding_dim;
      c.rank = cfg.cp_rank;
      return Head(CpMuMoE(c, rng, prefix));
    }
    case HeadKind::tr_mumoe: {
      TrMuMoE::Config c;
      c.n = n;
      c.in = cfg.embedding_dim;
      c.r1 = cfg.tr_rank1;
      c.r2 = cfg.tr_rank2;
      c.r3 = cfg.tr_rank3;
      return Head(TrMuMoE(c, rng, prefix));
    }
    case HeadKind::dense128:
      return Head(Dense128Head(cfg.embedding_dim, rng, prefix));
  }
  throw std::invalid_argument("unknown head kind");
}

HeadForward Head::forward(const Tensor& z, Mode mode, RngStream* noise_rng) const {
  HeadForward out;
  if (const auto* s = std::get_if<SparseMoE>(&impl_)) {
    SparseMoE::GateOut g;
    out.logits = s->forward(z, mode, noise_rng, &g);
    out.gate = std::move(g);
  } else if (const auto* c = std::get_if<CpMuMoE>(&impl_)) {
    out.logits = c->forward(z);
  } else if (const auto* t = std::get_if<TrMuMoE>(&impl_)) {
    out.logits = t->forward(z);
  } else {
    out.logits = std::get<Dense128Head>(impl_).forward(z);
  }
  return out;
}

std::vector<Parameter> Head::parameters() const {
  return std::visit([](const auto& h) { return h.parameters(); }, impl_);
}

std::int64_t Head::core_param_count() const {
  if (const auto* s = std::get_if<SparseMoE>(&impl_)) return s->expert_param_count();
  return std::visit(
      [](const auto& h) -> std::int64_t {
        if constexpr (requires { h.core_param_count(); }) return h.core_param_count();
        return 0;
      },
      impl_);
}

HeadKind Head::kind() const {
  if (std::holds_alternative<SparseMoE>(impl_)) return HeadKind::sparse_moe;
  if (std::holds_alternative<CpMuMoE>(impl_)) return HeadKind::cp_mumoe;
  if (std::holds_alternative<TrMuMoE>(impl_)) return HeadKind::tr_mumoe;
  return HeadKind::dense128;
}

std::int64_t head_core_param_count(const ModelConfig& cfg) {
  const std::int64_t n = cfg.resolved_experts();
  const std::int64_t in = cfg.embedding_dim;
  switch (cfg.head) {
    case HeadKind::sparse_moe:
      // n two-layer MLPs, 768 -> 256 -> 128.
      return n * (256 * in + 256 + 128 * 256 + 128);
    case HeadKind::cp_mumoe:
      return cfg.cp_rank * (n + in + 128);
    case HeadKind::tr_mumoe:
      return cfg.tr_rank1 * n * cfg.tr_rank2 + cfg.tr_rank2 * in * cfg.tr_rank3 +
             cfg.tr_rank3 * 128 * cfg.tr_rank1;
    case HeadKind::dense128:
      return 128 * in + 128;
  }
  throw std::invalid_argument("unknown head kind");
}

}  // namespace moedr
