#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ciaosr/coords.hpp"
#include "ciaosr/layers.hpp"

namespace ciaosr {

enum class HeadVariant {
  kFull,        // learned query/key attention, values see the non-local map
  kNoNonLocal,  // same networks, non-local map replaced by zeros
  kMlpWeights,  // ensemble logits from an MLP over [offset, scale]
  kLiif,        // area-weighted ensemble of a coordinate MLP
};

std::string variant_name(HeadVariant v);
HeadVariant parse_variant(const std::string& name);

struct HeadConfig {
  HeadVariant variant = HeadVariant::kFull;
  int local_size = 2;
  std::vector<std::size_t> query_hidden = {256, 256, 256, 256};
  std::vector<std::size_t> key_hidden = {256, 256};
  std::vector<std::size_t> value_hidden = {256, 256};
  std::vector<std::size_t> weight_hidden = {256, 256};
  std::vector<std::size_t> liif_hidden = {256, 256, 256, 256};
  int value_dim = 256;
  /// Query/key features are 3x3-unfolded codes (9C) instead of raw (C).
  bool unfold_features = true;
  /// Offsets are multiplied by the LR grid resolution.
  bool scale_offsets = true;
  /// Divide query-key logits by sqrt(d).
  bool scaled_logits = false;
  /// Queries per image rendered in one pass.
  std::size_t chunk = 30000;
};

/// Query coordinates for a batch: item b owns coords[b*per_item, (b+1)*per_item)
/// expressed in its own [-1,1] frame, and is rendered at scales[b].
struct QueryBatch {
  std::vector<Coord> coords;
  std::vector<Scale> scales;
  std::size_t per_item = 0;
};

/// Implicit decoder over an LR feature map: predicts a value at any query
/// coordinate from the codes of the surrounding LR cells.
template <typename T>
class ImplicitHead {
 public:
  ImplicitHead() = default;
  ImplicitHead(int feat_channels, int nonlocal_channels, const HeadConfig& cfg);

  /// feat: N x C x H x W, nonlocal: N x C_g x H x W (ignored by kLiif).
  /// Returns (N * per_item) x 3. ensemble_weights, when given, receives the
  /// (N * per_item) x |region| weights used for each query.
  Tensor<T> query(const Tensor<T>& feat, const Tensor<T>& nonlocal, const QueryBatch& batch,
                  Tensor<T>* ensemble_weights = nullptr) const;

  /// Full-grid render: N x 3 x h_out x w_out, processed in chunks.
  Tensor<T> render(const Tensor<T>& feat, const Tensor<T>& nonlocal, int h_out, int w_out) const;

  void init(Rng& rng);
  void collect(ParamList<T>& out, const std::string& prefix) const;

  const HeadConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t region() const;

  Mlp<T> phi_q;  // ensembled value -> RGB
  Mlp<T> phi_k;  // [F_i, r, s] -> key
  Mlp<T> phi_v;  // [F_i, G_i, r, s] -> value
  Mlp<T> phi_w;  // [r, s] -> logit (kMlpWeights)
  Mlp<T> f_liif; // [F_i, r, s] -> RGB (kLiif)

 private:
  struct Cells;
  Cells prepare(const Tensor<T>& feat, const Tensor<T>& nonlocal) const;
  Tensor<T> query_cells(const Cells& cells, const QueryBatch& batch, Tensor<T>* weights) const;

  HeadConfig cfg_;
  int feat_channels_ = 0;
  int nonlocal_channels_ = 0;
  std::size_t feature_dim_ = 0;
};

}  // namespace ciaosr
