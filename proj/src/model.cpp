#include "ciaosr/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ciaosr/ops.hpp"

namespace ciaosr {

nlohmann::json to_json(const ModelConfig& cfg) {
  const auto& h = cfg.head;
  return {
      {"encoder", {{"n_resblocks", cfg.encoder.n_resblocks}, {"n_feats", cfg.encoder.n_feats},
                   {"in_channels", cfg.encoder.in_channels}}},
      {"nonlocal", {{"enabled", cfg.nonlocal.enabled}, {"channels", cfg.nonlocal.channels},
                    {"scales", cfg.nonlocal.scales}, {"max_pixels", cfg.nonlocal.max_pixels},
                    {"tile", cfg.nonlocal.tile}, {"scaled_logits", cfg.nonlocal.scaled_logits}}},
      {"head", {{"variant", variant_name(h.variant)}, {"local_size", h.local_size},
                {"query_hidden", h.query_hidden}, {"key_hidden", h.key_hidden},
                {"value_hidden", h.value_hidden}, {"weight_hidden", h.weight_hidden},
                {"liif_hidden", h.liif_hidden}, {"value_dim", h.value_dim},
                {"unfold_features", h.unfold_features}, {"scale_offsets", h.scale_offsets},
                {"scaled_logits", h.scaled_logits}, {"chunk", h.chunk}}},
  };
}

namespace {
template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}
}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    read_opt(e, "n_resblocks", cfg.encoder.n_resblocks);
    read_opt(e, "n_feats", cfg.encoder.n_feats);
    read_opt(e, "in_channels", cfg.encoder.in_channels);
  }
  if (j.contains("nonlocal")) {
    const auto& n = j.at("nonlocal");
    read_opt(n, "enabled", cfg.nonlocal.enabled);
    read_opt(n, "channels", cfg.nonlocal.channels);
    read_opt(n, "scales", cfg.nonlocal.scales);
    read_opt(n, "max_pixels", cfg.nonlocal.max_pixels);
    read_opt(n, "tile", cfg.nonlocal.tile);
    read_opt(n, "scaled_logits", cfg.nonlocal.scaled_logits);
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    if (h.contains("variant")) cfg.head.variant = parse_variant(h.at("variant").get<std::string>());
    read_opt(h, "local_size", cfg.head.local_size);
    read_opt(h, "query_hidden", cfg.head.query_hidden);
    read_opt(h, "key_hidden", cfg.head.key_hidden);
    read_opt(h, "value_hidden", cfg.head.value_hidden);
    read_opt(h, "weight_hidden", cfg.head.weight_hidden);
    read_opt(h, "liif_hidden", cfg.head.liif_hidden);
    read_opt(h, "value_dim", cfg.head.value_dim);
    read_opt(h, "unfold_features", cfg.head.unfold_features);
    read_opt(h, "scale_offsets", cfg.head.scale_offsets);
    read_opt(h, "scaled_logits", cfg.head.scaled_logits);
    read_opt(h, "chunk", cfg.head.chunk);
  }
  return cfg;
}

template <typename T>
SrModel<T>::SrModel(const ModelConfig& cfg)
    : encoder(cfg.encoder),
      nonlocal(cfg.encoder.n_feats, cfg.nonlocal),
      head(cfg.encoder.n_feats, cfg.nonlocal.channels, cfg.head),
      cfg_(cfg) {}

template <typename T>
void SrModel<T>::init(Rng& rng) {
  Rng enc = rng.split(1), nl = rng.split(2), hd = rng.split(3);
  encoder.init(enc);
  nonlocal.init(nl);
  head.init(hd);
}

template <typename T>
bool SrModel<T>::uses_nonlocal() const {
  const auto v = cfg_.head.variant;
  return cfg_.nonlocal.enabled && (v == HeadVariant::kFull || v == HeadVariant::kMlpWeights);
}

template <typename T>
Tensor<T> SrModel<T>::features(const Tensor<T>& lr) const {
  return encoder.encode(affine(lr, T(2), T(-1)));
}

template <typename T>
Tensor<T> SrModel<T>::nonlocal_map(const Tensor<T>& feat) const {
  if (cfg_.head.variant == HeadVariant::kLiif) return Tensor<T>(Shape{1});
  if (!uses_nonlocal())
    return Tensor<T>(Shape{feat.size(0), static_cast<std::size_t>(cfg_.nonlocal.channels), feat.size(2), feat.size(3)});
  return nonlocal.apply(feat);
}

template <typename T>
Tensor<T> SrModel<T>::predict(const Tensor<T>& lr, const QueryBatch& batch, Tensor<T>* ensemble_weights) const {
  Tensor<T> feat = features(lr);
  return affine(head.query(feat, nonlocal_map(feat), batch, ensemble_weights), T(0.5), T(0.5));
}

template <typename T>
Tensor<T> SrModel<T>::render(const Tensor<T>& lr, int h_out, int w_out) const {
  Tensor<T> feat = features(lr);
  return affine(head.render(feat, nonlocal_map(feat), h_out, w_out), T(0.5), T(0.5));
}

template <typename T>
ParamList<T> SrModel<T>::parameters() const {
  ParamList<T> out;
  encoder.collect(out, "encoder");
  if (uses_nonlocal()) nonlocal.collect(out, "nonlocal");
  head.collect(out, "head");
  return out;
}

template <typename T>
ParamList<T> SrModel<T>::head_parameters() const {
  ParamList<T> out;
  head.collect(out, "head");
  return out;
}

template class SrModel<float>;
template class SrModel<double>;

int scaled_size(int size, double scale) {
  return std::max(1, static_cast<int>(std::lround(scale * size)));
}

Tensor<float> super_resolve(const SrModel<float>& model, const Tensor<float>& image, int h_out, int w_out) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("super_resolve: expects a 3 x H x W image");
  if (h_out < 1 || w_out < 1) throw std::invalid_argument("super_resolve: output size must be positive");
  const auto h = static_cast<int>(image.size(1)), w = static_cast<int>(image.size(2));
  if (h == h_out && w == w_out) return image.clone();
  NoGradGuard guard;
  Tensor<float> batch = reshape(image, Shape{1, 3, image.size(1), image.size(2)});
  Tensor<float> out = model.render(batch, h_out, w_out);
  return reshape(out, Shape{3, static_cast<std::size_t>(h_out), static_cast<std::size_t>(w_out)});
}

Tensor<float> chain_render(const SrModel<float>& model, const Tensor<float>& image, const std::vector<double>& steps,
                           int h_target, int w_target) {
  if (steps.empty()) throw std::invalid_argument("chain_render: empty scale chain");
  for (double s : steps)
    if (!(s > 1.0)) throw std::invalid_argument("chain_render: every chain scale must exceed 1");
  Tensor<float> current = image;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    int h = h_target, w = w_target;
    if (i + 1 < steps.size()) {
      h = static_cast<int>(std::ceil(steps[i] * static_cast<double>(current.size(1)) - 1e-9));
      w = static_cast<int>(std::ceil(steps[i] * static_cast<double>(current.size(2)) - 1e-9));
    }
    current = super_resolve(model, current, h, w);
    if (i + 1 < steps.size())
      for (float& v : current.data()) v = std::clamp(v, 0.0f, 1.0f);
  }
  return current;
}

}  // namespace ciaosr
