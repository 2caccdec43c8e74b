#include "moedr/encoder.hpp"

#include <stdexcept>

#include "moedr/init.hpp"
#include "moedr/ops.hpp"

namespace moedr {

namespace {

Parameter conv_weight(RngStream& rng, const std::string& name, std::int64_t oc,
                      std::int64_t ic, std::int64_t k) {
  const double fan_in = static_cast<double>(ic * k * k);
  const double fan_out = static_cast<double>(oc * k * k);
  return Parameter::create({oc, ic, k, k}, glorot_uniform(rng, oc * ic * k * k, fan_in, fan_out), name);
}

Parameter linear_weight(RngStream& rng, const std::string& name, std::int64_t out,
                        std::int64_t in) {
  return Parameter::create({out, in}, glorot_uniform(rng, out * in, static_cast<double>(in), static_cast<double>(out)), name);
}

Parameter zero_bias(const std::string& name, std::int64_t n) {
  return Parameter::create({n}, std::vector<double>(static_cast<std::size_t>(n), 0.0), name);
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, RngStream& rng, std::string prefix) : cfg_(cfg) {
  if (cfg.embedding_dim <= 0) throw std::invalid_argument("encoder: embedding_dim must be positive");
  const std::int64_t d = cfg.embedding_dim;
  if (cfg.topology == EncoderTopology::tiny) {
    // 224 -> pool4 -> 56 -> pool4 -> 14 -> pool4 -> 3; flatten 32*3*3 = 288.
    const std::int64_t chans[4] = {3, 8, 16, 32};
    for (int i = 0; i < 3; ++i) {
      ConvStage s;
      s.w = conv_weight(rng, prefix + "conv" + std::to_string(i) + ".w", chans[i + 1], chans[i], 3);
      s.b = zero_bias(prefix + "conv" + std::to_string(i) + ".b", chans[i + 1]);
      s.stride = 1;
      s.padding = 1;
      s.pool_window = 4;
      s.pool_stride = 4;
      convs_.push_back(std::move(s));
    }
    LinearStage fc;
    fc.w = linear_weight(rng, prefix + "fc.w", d, 32 * 3 * 3);
    fc.b = zero_bias(prefix + "fc.b", d);
    linears_.push_back(std::move(fc));
  } else {
    // AlexNet feature stack; the last classifier layer maps to embedding_dim.
    struct Spec {
      std::int64_t oc, ic, k;
      int stride, pad, pool_w, pool_s;
    };
    const Spec specs[5] = {
        {64, 3, 11, 4, 2, 3, 2},
        {192, 64, 5, 1, 2, 3, 2},
        {384, 192, 3, 1, 1, 0, 0},
        {256, 384, 3, 1, 1, 0, 0},
        {256, 256, 3, 1, 1, 3, 2},
    };
    for (int i = 0; i < 5; ++i) {
      const auto& sp = specs[i];
      ConvStage s;
      s.w = conv_weight(rng, prefix + "conv" + std::to_string(i) + ".w", sp.oc, sp.ic, sp.k);
      s.b = zero_bias(prefix + "conv" + std::to_string(i) + ".b", sp.oc);
      s.stride = sp.stride;
      s.padding = sp.pad;
      s.pool_window = sp.pool_w;
      s.pool_stride = sp.pool_s;
      convs_.push_back(std::move(s));
    }
    const std::int64_t flat = 256 * 6 * 6;
    LinearStage fc1;
    fc1.w = linear_weight(rng, prefix + "fc0.w", 4096, flat);
    fc1.b = zero_bias(prefix + "fc0.b", 4096);
    fc1.relu_after = true;
    LinearStage fc2;
    fc2.w = linear_weight(rng, prefix + "fc1.w", 4096, 4096);
    fc2.b = zero_bias(prefix + "fc1.b", 4096);
    fc2.relu_after = true;
    LinearStage fc3;
    fc3.w = linear_weight(rng, prefix + "fc2.w", d, 4096);
    fc3.b = zero_bias(prefix + "fc2.b", d);
    linears_.push_back(std::move(fc1));
    linears_.push_back(std::move(fc2));
    linears_.push_back(std::move(fc3));
  }
}

Tensor Encoder::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != feat::kImageSize ||
      image.dim(2) != feat::kImageSize) {
    throw std::invalid_argument("encoder: expected a 3x224x224 image, got " + shape_str(image.shape()));
  }
  Tensor x = image;
  for (const auto& s : convs_) {
    x = relu(conv2d(x, s.w.value, s.b.value, s.stride, s.padding));
    if (s.pool_window > 0) x = maxpool2d(x, s.pool_window, s.pool_stride);
  }
  x = reshape(x, {x.size()});
  for (const auto& l : linears_) {
    x = linear(x, l.w.value, l.b.value);
    if (l.relu_after) x = relu(x);
  }
  return x;
}

std::vector<Parameter> Encoder::parameters() const {
  std::vector<Parameter> out;
  for (const auto& s : convs_) {
    out.push_back(s.w);
    out.push_back(s.b);
  }
  for (const auto& l : linears_) {
    out.push_back(l.w);
    out.push_back(l.b);
  }
  return out;
}

std::int64_t Encoder::param_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

void Encoder::import_weights(const TensorContainer& c, const std::string& prefix) {
  auto params = parameters();
  load_parameters(params, c, prefix);
}

void Encoder::export_weights(TensorContainer& c, const std::string& prefix) const {
  save_parameters(parameters(), c, prefix);
}

std::pair<Tensor, Tensor> encode_pair(const Encoder& enc_read, const Encoder& enc_interview,
                                      const FeatureImage& f_read, const FeatureImage& f_interview) {
  return {enc_read.forward(f_read), enc_interview.forward(f_interview)};
}

}  // namespace moedr
