#pragma once

#include <functional>
#include <vector>

#include "json.hpp"

#include "ciaosr/encoder.hpp"
#include "ciaosr/head.hpp"
#include "ciaosr/nonlocal.hpp"

namespace ciaosr {

struct ModelConfig {
  EncoderConfig encoder;
  NonLocalConfig nonlocal;
  HeadConfig head;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Encoder, non-local branch and implicit head. Images are in [0, 1]; the
/// network itself works on values shifted to [-1, 1].
template <typename T>
class SrModel {
 public:
  explicit SrModel(const ModelConfig& cfg);

  void init(Rng& rng);

  /// Whether this variant feeds the non-local map into the value network.
  bool uses_nonlocal() const;

  Tensor<T> features(const Tensor<T>& lr) const;
  /// Non-local map for features, or zeros when the variant ignores it.
  Tensor<T> nonlocal_map(const Tensor<T>& feat) const;

  /// lr: N x 3 x h x w. Returns (N * per_item) x 3 predictions.
  Tensor<T> predict(const Tensor<T>& lr, const QueryBatch& batch, Tensor<T>* ensemble_weights = nullptr) const;

  /// N x 3 x h_out x w_out.
  Tensor<T> render(const Tensor<T>& lr, int h_out, int w_out) const;

  ParamList<T> parameters() const;
  ParamList<T> head_parameters() const;

  const ModelConfig& config() const { return cfg_; }

  Encoder<T> encoder;
  NonLocalAttention<T> nonlocal;
  ImplicitHead<T> head;

 private:
  ModelConfig cfg_;
};

/// 3 x H x W image in, 3 x h_out x w_out out (unclamped). When the size is
/// unchanged the input is returned as is.
Tensor<float> super_resolve(const SrModel<float>& model, const Tensor<float>& image, int h_out, int w_out);

/// Super-resolves through successive magnifications. Intermediate sizes are
/// rounded up; the last step lands exactly on h_target x w_target.
Tensor<float> chain_render(const SrModel<float>& model, const Tensor<float>& image, const std::vector<double>& steps,
                           int h_target, int w_target);

/// Output size for a real scale: round(s * size), at least 1.
int scaled_size(int size, double scale);

}  // namespace ciaosr
