#include "moedr/fusion.hpp"

#include <stdexcept>

#include "moedr/init.hpp"
#include "moedr/ops.hpp"

namespace moedr {

BlockFusion::BlockFusion(const BlockFusionConfig& cfg, RngStream& rng, std::string prefix)
    : cfg_(cfg) {
  if (cfg.projected_dim % cfg.num_chunks != 0) {
    throw std::invalid_argument("block fusion: projected_dim must be divisible by num_chunks");
  }
  if (cfg.num_chunks * cfg.chunk_out_dim != cfg.output_dim) {
    throw std::invalid_argument("block fusion: num_chunks * chunk_out_dim must equal output_dim");
  }
  const std::int64_t ci = cfg.chunk_in_dim(), co = cfg.chunk_out_dim;
  proj_x_w = Parameter::create({cfg.projected_dim, cfg.input_dim_x},
                               glorot_uniform(rng, cfg.projected_dim * cfg.input_dim_x,
                                              static_cast<double>(cfg.input_dim_x),
                                              static_cast<double>(cfg.projected_dim)),
                               prefix + "proj_x.w");
  proj_x_b = Parameter::create({cfg.projected_dim},
                               std::vector<double>(static_cast<std::size_t>(cfg.projected_dim), 0.0),
                               prefix + "proj_x.b");
  proj_y_w = Parameter::create({cfg.projected_dim, cfg.input_dim_y},
                               glorot_uniform(rng, cfg.projected_dim * cfg.input_dim_y,
                                              static_cast<double>(cfg.input_dim_y),
                                              static_cast<double>(cfg.projected_dim)),
                               prefix + "proj_y.w");
  proj_y_b = Parameter::create({cfg.projected_dim},
                               std::vector<double>(static_cast<std::size_t>(cfg.projected_dim), 0.0),
                               prefix + "proj_y.b");
  for (std::int64_t k = 0; k < cfg.num_chunks; ++k) {
    cores.push_back(Parameter::create(
        {ci, ci, co},
        glorot_uniform(rng, ci * ci * co, static_cast<double>(ci * ci), static_cast<double>(co)),
        prefix + "core" + std::to_string(k)));
  }
  out_w = Parameter::create({cfg.output_dim, cfg.output_dim},
                            glorot_uniform(rng, cfg.output_dim * cfg.output_dim,
                                           static_cast<double>(cfg.output_dim),
                                           static_cast<double>(cfg.output_dim)),
                            prefix + "proj_out.w");
  out_b = Parameter::create({cfg.output_dim},
                            std::vector<double>(static_cast<std::size_t>(cfg.output_dim), 0.0),
                            prefix + "proj_out.b");
}

Tensor BlockFusion::chunk_vector(const Tensor& x, const Tensor& y) const {
  if (x.size() != cfg_.input_dim_x || y.size() != cfg_.input_dim_y) {
    throw std::invalid_argument("block fusion: input lengths must be " +
                                std::to_string(cfg_.input_dim_x) + "/" +
                                std::to_string(cfg_.input_dim_y));
  }
  const std::int64_t ci = cfg_.chunk_in_dim();
  Tensor px = linear(x, proj_x_w.value, proj_x_b.value);
  Tensor py = linear(y, proj_y_w.value, proj_y_b.value);
  std::vector<Tensor> chunks;
  chunks.reserve(static_cast<std::size_t>(cfg_.num_chunks));
  for (std::int64_t k = 0; k < cfg_.num_chunks; ++k) {
    Tensor xk = slice(px, k * ci, ci);
    Tensor yk = slice(py, k * ci, ci);
    // core_k x_1 xk x_2 yk -> chunk_out_dim
    Tensor t = contract(cores[static_cast<std::size_t>(k)].value, xk, {{0, 0}});
    chunks.push_back(contract(t, yk, {{0, 0}}));
  }
  return concat(chunks);
}

Tensor BlockFusion::pre_output(const Tensor& x, const Tensor& y) const {
  Tensor v = chunk_vector(x, y);
  if (cfg_.normalize) v = l2_normalize(signed_sqrt(v));
  return v;
}

Tensor BlockFusion::forward(const Tensor& x, const Tensor& y) const {
  return linear(pre_output(x, y), out_w.value, out_b.value);
}

std::vector<Parameter> BlockFusion::parameters() const {
  std::vector<Parameter> out = {proj_x_w, proj_x_b, proj_y_w, proj_y_b};
  out.insert(out.end(), cores.begin(), cores.end());
  out.push_back(out_w);
  out.push_back(out_b);
  return out;
}

ConcatFusion::ConcatFusion(std::int64_t input_dim, std::int64_t output_dim, RngStream& rng,
                           std::string prefix) {
  w = Parameter::create({output_dim, 2 * input_dim},
                        glorot_uniform(rng, output_dim * 2 * input_dim,
                                       static_cast<double>(2 * input_dim),
                                       static_cast<double>(output_dim)),
                        prefix + "concat.w");
  b = Parameter::create({output_dim}, std::vector<double>(static_cast<std::size_t>(output_dim), 0.0),
                        prefix + "concat.b");
}

Tensor ConcatFusion::forward(const Tensor& x, const Tensor& y) const {
  return linear(concat({x, y}), w.value, b.value);
}

}  // namespace moedr
