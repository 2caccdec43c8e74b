#include "moedr/model.hpp"

#include <stdexcept>

#include "moedr/ops.hpp"

namespace moedr {

Model::Model(const ModelConfig& cfg, RngStream& rng) : cfg_(cfg) {
  validate_config(cfg);
  EncoderConfig ec;
  ec.topology = cfg.encoder_topology;
  ec.embedding_dim = cfg.embedding_dim;
  ec.shared_weights = cfg.encoder_shared;

  RngStream enc_rng = rng.split(1);
  RngStream fusion_rng = rng.split(2);
  RngStream head_rng = rng.split(3);

  if (cfg.inputs == InputMode::both) {
    if (cfg.encoder_shared) {
      enc_read_ = std::make_shared<Encoder>(ec, enc_rng, "enc.");
      enc_interview_ = enc_read_;
    } else {
      enc_read_ = std::make_shared<Encoder>(ec, enc_rng, "enc_read.");
      RngStream enc2_rng = rng.split(4);
      enc_interview_ = std::make_shared<Encoder>(ec, enc2_rng, "enc_int.");
    }
    if (cfg.fusion == FusionKind::block) {
      BlockFusionConfig bc;
      bc.input_dim_x = cfg.embedding_dim;
      bc.input_dim_y = cfg.embedding_dim;
      bc.output_dim = cfg.embedding_dim;
      bc.normalize = cfg.fusion_normalize;
      block_.emplace(bc, fusion_rng);
    } else {
      concat_.emplace(cfg.embedding_dim, cfg.embedding_dim, fusion_rng);
    }
  } else {
    // Single branch: one encoder, its embedding feeds the head directly.
    enc_read_ = std::make_shared<Encoder>(ec, enc_rng, "enc.");
    enc_interview_ = enc_read_;
  }

  head_.emplace(Head::make(cfg, head_rng));
}

HeadForward Model::forward(const SampleFeatures& s, Mode mode, RngStream* noise_rng) const {
  Tensor z;
  switch (cfg_.inputs) {
    case InputMode::both: {
      auto [fr, fi] = std::pair(enc_read_->forward(s.read), enc_interview_->forward(s.interview));
      z = block_ ? block_->forward(fr, fi) : concat_->forward(fr, fi);
      break;
    }
    case InputMode::read_only:
      z = enc_read_->forward(s.read);
      break;
    case InputMode::interview_only:
      z = enc_read_->forward(s.interview);
      break;
  }
  return head_->forward(z, mode, noise_rng);
}

int Model::predict(const SampleFeatures& s) const {
  HeadForward out = forward(s, Mode::eval, nullptr);
  const auto& l = out.logits.values();
  return l[1] > l[0] ? 1 : 0;
}

std::vector<Parameter> Model::parameters() const {
  std::vector<Parameter> out = enc_read_->parameters();
  if (enc_interview_ != enc_read_) {
    auto more = enc_interview_->parameters();
    out.insert(out.end(), more.begin(), more.end());
  }
  if (block_) {
    auto more = block_->parameters();
    out.insert(out.end(), more.begin(), more.end());
  }
  if (concat_) {
    auto more = concat_->parameters();
    out.insert(out.end(), more.begin(), more.end());
  }
  auto more = head_->parameters();
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

void Model::export_weights(TensorContainer& c, const std::string& prefix) const {
  save_parameters(parameters(), c, prefix);
}

void Model::import_weights(const TensorContainer& c, const std::string& prefix) {
  auto params = parameters();
  load_parameters(params, c, prefix);
}

std::string feature_entry_name(const std::string& subject_id, Task task) {
  return subject_id + "/" + task_name(task);
}

Dataset load_dataset(const std::vector<ManifestEntry>& entries, const TensorContainer* features) {
  Dataset out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    SubjectSample s;
    s.subject_id = e.subject_id;
    s.label = e.label;
    if (features) {
      const auto& r = features->at(feature_entry_name(e.subject_id, Task::reading));
      const auto& i = features->at(feature_entry_name(e.subject_id, Task::interview));
      s.features.read = Tensor::from(r.shape, r.data);
      s.features.interview = Tensor::from(i.shape, i.data);
    } else {
      s.features.read = make_feature_image(load_audio(e.reading_path), Task::reading).channels;
      s.features.interview = make_feature_image(load_audio(e.interview_path), Task::interview).channels;
    }
    if (s.features.read.shape() != Shape{3, feat::kImageSize, feat::kImageSize} ||
        s.features.interview.shape() != Shape{3, feat::kImageSize, feat::kImageSize}) {
      throw std::runtime_error("subject " + e.subject_id + ": feature image has wrong shape");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace moedr
