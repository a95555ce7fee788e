#include "ciaosr/head.hpp"

#include <cmath>
#include <stdexcept>

#include "ciaosr/ops.hpp"

namespace ciaosr {

std::string variant_name(HeadVariant v) {
  switch (v) {
    case HeadVariant::kFull: return "full";
    case HeadVariant::kNoNonLocal: return "no_nonlocal";
    case HeadVariant::kMlpWeights: return "mlp_weights";
    case HeadVariant::kLiif: return "liif";
  }
  return "unknown";
}

HeadVariant parse_variant(const std::string& name) {
  if (name == "full") return HeadVariant::kFull;
  if (name == "no_nonlocal") return HeadVariant::kNoNonLocal;
  if (name == "mlp_weights") return HeadVariant::kMlpWeights;
  if (name == "liif") return HeadVariant::kLiif;
  throw std::invalid_argument("unknown variant '" + name + "' (expected full, no_nonlocal, mlp_weights or liif)");
}

namespace {
constexpr std::size_t kAux = 4;  // dy, dx, s_h, s_w

// Cell-indexed tables of a flattened N x C x H x W map: (N*H*W) x C.
template <typename T>
Tensor<T> cell_table(const Tensor<T>& x) {
  const std::size_t n = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  return reshape(permute(x, {0, 2, 3, 1}), Shape{n * hw, c});
}

// First-layer rows [begin, begin + len) of an MLP weight.
template <typename T>
Tensor<T> weight_rows(const Mlp<T>& mlp, std::size_t begin, std::size_t len) {
  return narrow(mlp.layers.front().weight, 0, begin, len);
}
}  // namespace

template <typename T>
struct ImplicitHead<T>::Cells {
  std::size_t n = 0, h = 0, w = 0;
  Tensor<T> codes;   // (N*H*W) x D, query features
  Tensor<T> keys;    // (N*H*W) x hidden, F-part of phi_k's first layer
  Tensor<T> values;  // (N*H*W) x hidden, [F, G]-part of phi_v's first layer
  Tensor<T> liif;    // (N*H*W) x hidden, F-part of f_liif's first layer
};

template <typename T>
ImplicitHead<T>::ImplicitHead(int feat_channels, int nonlocal_channels, const HeadConfig& cfg)
    : cfg_(cfg), feat_channels_(feat_channels), nonlocal_channels_(nonlocal_channels) {
  if (feat_channels <= 0 || nonlocal_channels < 0 || cfg.value_dim <= 0)
    throw std::invalid_argument("head: invalid channel configuration");
  if (cfg.local_size < 1 || cfg.local_size > 3)
    throw std::invalid_argument("head: local size must be 1, 2 or 3, got " + std::to_string(cfg.local_size));
  if (cfg.chunk == 0) throw std::invalid_argument("head: chunk must be positive");
  const auto c = static_cast<std::size_t>(feat_channels);
  const auto cg = static_cast<std::size_t>(nonlocal_channels);
  const auto dv = static_cast<std::size_t>(cfg.value_dim);
  feature_dim_ = cfg.unfold_features ? 9 * c : c;
  const std::size_t d = feature_dim_;
  if (cfg.variant == HeadVariant::kLiif) {
    f_liif = Mlp<T>(d + kAux, cfg.liif_hidden, 3);
    return;
  }
  if (cfg.value_hidden.empty() || (cfg.variant != HeadVariant::kMlpWeights && cfg.key_hidden.empty()))
    throw std::invalid_argument("head: key/value networks need at least one hidden layer");
  phi_q = Mlp<T>(dv, cfg.query_hidden, 3);
  phi_v = Mlp<T>(d + cg + kAux, cfg.value_hidden, dv);
  if (cfg.variant == HeadVariant::kMlpWeights)
    phi_w = Mlp<T>(kAux, cfg.weight_hidden, 1);
  else
    phi_k = Mlp<T>(d + kAux, cfg.key_hidden, d);
}

template <typename T>
std::size_t ImplicitHead<T>::region() const {
  return cfg_.variant == HeadVariant::kLiif ? 4 : region_size(cfg_.local_size);
}

template <typename T>
typename ImplicitHead<T>::Cells ImplicitHead<T>::prepare(const Tensor<T>& feat, const Tensor<T>& nonlocal) const {
  if (feat.dim() != 4 || feat.size(1) != static_cast<std::size_t>(feat_channels_))
    throw ShapeError("head: expected N x " + std::to_string(feat_channels_) + " x H x W features, got " +
                     shape_string(feat.shape()));
  Cells cells;
  cells.n = feat.size(0);
  cells.h = feat.size(2);
  cells.w = feat.size(3);
  cells.codes = cell_table(cfg_.unfold_features ? unfold(feat, 3) : feat);
  const std::size_t d = feature_dim_;
  if (cfg_.variant == HeadVariant::kLiif) {
    cells.liif = matmul(cells.codes, weight_rows(f_liif, 0, d));
    return cells;
  }
  if (nonlocal.dim() != 4 || nonlocal.size(0) != cells.n || nonlocal.size(1) != static_cast<std::size_t>(nonlocal_channels_) ||
      nonlocal.size(2) != cells.h || nonlocal.size(3) != cells.w)
    throw ShapeError("head: non-local map " + shape_string(nonlocal.shape()) + " is not aligned with features " +
                     shape_string(feat.shape()));
  const auto cg = static_cast<std::size_t>(nonlocal_channels_);
  cells.values = matmul(cells.codes, weight_rows(phi_v, 0, d));
  if (cg > 0) cells.values = add(cells.values, matmul(cell_table(nonlocal), weight_rows(phi_v, d, cg)));
  if (cfg_.variant != HeadVariant::kMlpWeights) cells.keys = matmul(cells.codes, weight_rows(phi_k, 0, d));
  return cells;
}

template <typename T>
Tensor<T> ImplicitHead<T>::query_cells(const Cells& cells, const QueryBatch& batch, Tensor<T>* weights) const {
  const std::size_t per = batch.per_item;
  if (per == 0 || batch.coords.size() != per * cells.n || batch.scales.size() != cells.n)
    throw std::invalid_argument("head: query batch does not match " + std::to_string(cells.n) + " feature maps");
  const CoordGrid grid(static_cast<int>(cells.h), static_cast<int>(cells.w));
  const std::size_t hw = cells.h * cells.w;
  const std::size_t nq = batch.coords.size();
  const std::size_t l = region();
  const bool liif = cfg_.variant == HeadVariant::kLiif;

  std::vector<std::size_t> nearest(nq), neighbor(nq * l);
  Tensor<T> aux(Shape{nq * l, kAux});
  Tensor<T> area(liif ? Shape{nq, 1, l} : Shape{1});
  for (std::size_t q = 0; q < nq; ++q) {
    const Coord c = batch.coords[q];
    if (!(c.y >= -1.0 && c.y <= 1.0 && c.x >= -1.0 && c.x <= 1.0))
      throw std::invalid_argument("head: query coordinate outside [-1, 1]^2");
    const std::size_t item = q / per;
    const std::size_t base = item * hw;
    const Scale s = batch.scales[item];
    const GridIndex near = nearest_index(c, grid);
    nearest[q] = base + static_cast<std::size_t>(near.row) * cells.w + static_cast<std::size_t>(near.col);
    std::vector<GridIndex> region_cells;
    if (liif) {
      const Neighborhood nb = local_neighbors(c, grid);
      region_cells.assign(nb.cells.begin(), nb.cells.end());
      const auto wts = area_weights(c, nb);
      for (std::size_t i = 0; i < 4; ++i) area.raw()[q * 4 + i] = static_cast<T>(wts[i]);
    } else {
      region_cells = local_region(c, grid, cfg_.local_size);
    }
    for (std::size_t i = 0; i < l; ++i) {
      const GridIndex g = region_cells[i];
      neighbor[q * l + i] = base + static_cast<std::size_t>(g.row) * cells.w + static_cast<std::size_t>(g.col);
      const RelOffset r = rel_offset(c, grid.at(g), grid, cfg_.scale_offsets);
      T* a = aux.raw() + (q * l + i) * kAux;
      a[0] = static_cast<T>(r.dy);
      a[1] = static_cast<T>(r.dx);
      a[2] = static_cast<T>(s.h);
      a[3] = static_cast<T>(s.w);
    }
  }

  const std::size_t d = feature_dim_;
  auto first_layer = [&](const Mlp<T>& mlp, const Tensor<T>& cell_part, std::size_t aux_row) {
    Tensor<T> pre = add(gather_rows(cell_part, neighbor), matmul(aux, weight_rows(mlp, aux_row, kAux)));
    return mlp.forward_from_first_preactivation(add_bias(pre, mlp.layers.front().bias));
  };

  if (liif) {
    Tensor<T> rgb = first_layer(f_liif, cells.liif, d);
    if (weights) *weights = reshape(area, Shape{nq, l});
    return reshape(bmm(area, reshape(rgb, Shape{nq, l, 3})), Shape{nq, 3});
  }

  const auto cg = static_cast<std::size_t>(nonlocal_channels_);
  const auto dv = static_cast<std::size_t>(cfg_.value_dim);
  Tensor<T> values = first_layer(phi_v, cells.values, d + cg);
  Tensor<T> logits;
  if (cfg_.variant == HeadVariant::kMlpWeights) {
    logits = reshape(phi_w.forward(aux), Shape{nq, 1, l});
  } else {
    Tensor<T> keys = first_layer(phi_k, cells.keys, d);
    Tensor<T> q = reshape(gather_rows(cells.codes, nearest), Shape{nq, 1, d});
    logits = bmm(q, reshape(keys, Shape{nq, l, d}), true);
    if (cfg_.scaled_logits) logits = affine(logits, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))), T(0));
  }
  Tensor<T> attn = softmax(logits, 2);
  if (weights) *weights = reshape(attn, Shape{nq, l});
  Tensor<T> mixed = reshape(bmm(attn, reshape(values, Shape{nq, l, dv})), Shape{nq, dv});
  return phi_q.forward(mixed);
}

template <typename T>
Tensor<T> ImplicitHead<T>::query(const Tensor<T>& feat, const Tensor<T>& nonlocal, const QueryBatch& batch,
                                 Tensor<T>* ensemble_weights) const {
  return query_cells(prepare(feat, nonlocal), batch, ensemble_weights);
}

template <typename T>
Tensor<T> ImplicitHead<T>::render(const Tensor<T>& feat, const Tensor<T>& nonlocal, int h_out, int w_out) const {
  if (h_out < 1 || w_out < 1) throw std::invalid_argument("render: output size must be positive");
  const Cells cells = prepare(feat, nonlocal);
  const Scale s = scale_vector(static_cast<int>(cells.h), static_cast<int>(cells.w), h_out, w_out);
  const std::vector<Coord> grid = make_coord_grid(h_out, w_out).coords();
  const std::size_t total = grid.size();
  std::vector<Tensor<T>> parts;
  for (std::size_t start = 0; start < total; start += cfg_.chunk) {
    const std::size_t len = std::min(cfg_.chunk, total - start);
    QueryBatch batch;
    batch.per_item = len;
    batch.scales.assign(cells.n, s);
    batch.coords.reserve(len * cells.n);
    for (std::size_t b = 0; b < cells.n; ++b)
      batch.coords.insert(batch.coords.end(), grid.begin() + static_cast<std::ptrdiff_t>(start),
                          grid.begin() + static_cast<std::ptrdiff_t>(start + len));
    parts.push_back(reshape(query_cells(cells, batch, nullptr), Shape{cells.n, len, 3}));
  }
  Tensor<T> all = parts.size() == 1 ? parts.front() : concat(parts, 1);
  return permute(reshape(all, Shape{cells.n, static_cast<std::size_t>(h_out), static_cast<std::size_t>(w_out), 3}),
                 {0, 3, 1, 2});
}

template <typename T>
void ImplicitHead<T>::init(Rng& rng) {
  if (cfg_.variant == HeadVariant::kLiif) {
    f_liif.init(rng);
    return;
  }
  phi_q.init(rng);
  phi_v.init(rng);
  if (cfg_.variant == HeadVariant::kMlpWeights)
    phi_w.init(rng);
  else
    phi_k.init(rng);
}

template <typename T>
void ImplicitHead<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  if (cfg_.variant == HeadVariant::kLiif) {
    f_liif.collect(out, prefix + ".f");
    return;
  }
  phi_q.collect(out, prefix + ".phi_q");
  if (cfg_.variant == HeadVariant::kMlpWeights)
    phi_w.collect(out, prefix + ".phi_w");
  else
    phi_k.collect(out, prefix + ".phi_k");
  phi_v.collect(out, prefix + ".phi_v");
}

template class ImplicitHead<float>;
template class ImplicitHead<double>;

}  // namespace ciaosr
