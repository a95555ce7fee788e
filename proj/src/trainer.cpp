#include "ciaosr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ciaosr/image_io.hpp"
#include "ciaosr/ops.hpp"
#include "ciaosr/optim.hpp"

namespace ciaosr {

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.iters_per_epoch < 1 || cfg.batch_size < 1 || cfg.lr_decay_every < 1)
    throw std::invalid_argument("train config: epochs >= 0, iters_per_epoch, batch_size and lr_decay_every >= 1");
  if (!(cfg.lr0 > 0) || !(cfg.lr_decay_factor > 0)) throw std::invalid_argument("train config: lr0 and decay factor must be > 0");
  if (cfg.grad_clip < 0 || cfg.max_images < 0) throw std::invalid_argument("train config: negative grad_clip or max_images");
  validate(cfg.degradation);
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"iters_per_epoch", cfg.iters_per_epoch},
          {"batch_size", cfg.batch_size},
          {"lr0", cfg.lr0},
          {"lr_decay_factor", cfg.lr_decay_factor},
          {"lr_decay_every", cfg.lr_decay_every},
          {"seed", cfg.seed},
          {"grad_clip", cfg.grad_clip},
          {"max_images", cfg.max_images},
          {"degradation",
           {{"scale_min", cfg.degradation.scale_min},
            {"scale_max", cfg.degradation.scale_max},
            {"patch_lr", cfg.degradation.patch_lr},
            {"queries", cfg.degradation.queries}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base) {
  TrainConfig cfg = base;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.iters_per_epoch = j.value("iters_per_epoch", cfg.iters_per_epoch);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr0 = j.value("lr0", cfg.lr0);
  cfg.lr_decay_factor = j.value("lr_decay_factor", cfg.lr_decay_factor);
  cfg.lr_decay_every = j.value("lr_decay_every", cfg.lr_decay_every);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.max_images = j.value("max_images", cfg.max_images);
  if (j.contains("degradation")) {
    const auto& d = j.at("degradation");
    cfg.degradation.scale_min = d.value("scale_min", cfg.degradation.scale_min);
    cfg.degradation.scale_max = d.value("scale_max", cfg.degradation.scale_max);
    cfg.degradation.patch_lr = d.value("patch_lr", cfg.degradation.patch_lr);
    cfg.degradation.queries = d.value("queries", cfg.degradation.queries);
  }
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"epochs", "iters_per_epoch", "batch_size", "lr0",        "lr_decay_factor",
                                  "lr_decay_every", "seed",    "grad_clip",  "max_images", "degradation"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
  validate(cfg);
  return cfg;
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw std::invalid_argument("learning_rate: negative epoch");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

TrainConfig desk_train_config() {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.iters_per_epoch = 300;
  cfg.batch_size = 4;
  cfg.lr0 = 5e-4;
  cfg.lr_decay_every = 4;
  cfg.max_images = 8;
  cfg.degradation.patch_lr = 24;
  cfg.degradation.queries = 288;
  return cfg;
}

ModelConfig desk_model_config(HeadVariant variant, int local_size) {
  ModelConfig cfg;
  cfg.encoder.n_resblocks = 4;
  cfg.encoder.n_feats = 24;
  cfg.nonlocal.channels = 16;
  cfg.head.variant = variant;
  cfg.head.local_size = local_size;
  cfg.head.query_hidden = {64, 64};
  cfg.head.key_hidden = {64};
  cfg.head.value_hidden = {64};
  cfg.head.weight_hidden = {32};
  cfg.head.liif_hidden = {64, 64, 64};
  cfg.head.value_dim = 64;
  return cfg;
}

TrainConfig smoke_train_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.iters_per_epoch = 3;
  cfg.batch_size = 2;
  cfg.lr0 = 1e-3;
  cfg.lr_decay_every = 1;
  cfg.max_images = 4;
  cfg.degradation.patch_lr = 12;
  cfg.degradation.queries = 64;
  return cfg;
}

ModelConfig smoke_model_config(HeadVariant variant, int local_size) {
  ModelConfig cfg;
  cfg.encoder.n_resblocks = 1;
  cfg.encoder.n_feats = 8;
  cfg.nonlocal.channels = 4;
  cfg.head.variant = variant;
  cfg.head.local_size = local_size;
  cfg.head.query_hidden = {16};
  cfg.head.key_hidden = {16};
  cfg.head.value_hidden = {16};
  cfg.head.weight_hidden = {8};
  cfg.head.liif_hidden = {16, 16};
  cfg.head.value_dim = 16;
  return cfg;
}

Batch make_batch(const std::vector<Tensor<float>>& images, const TrainConfig& cfg, std::int64_t step) {
  if (images.empty()) throw TrainingError("train: dataset is empty");
  const Rng stream = Rng(cfg.seed).split(1).split(static_cast<std::uint64_t>(step));
  const auto n = static_cast<std::size_t>(cfg.batch_size);
  const auto p = static_cast<std::size_t>(cfg.degradation.patch_lr);
  Batch batch;
  batch.lr = Tensor<float>(Shape{n, 3, p, p});
  std::vector<float> target;
  for (std::size_t b = 0; b < n; ++b) {
    Rng rng = stream.split(b);
    const auto& img = images[rng.below(images.size())];
    PatchSample s = sample_training_pair(img, cfg.degradation, rng);
    std::copy(s.lr.raw(), s.lr.raw() + 3 * p * p, batch.lr.raw() + b * 3 * p * p);
    if (b == 0) batch.queries.per_item = s.coords.size();
    if (s.coords.size() != batch.queries.per_item) throw TrainingError("train: uneven query counts within a batch");
    batch.queries.coords.insert(batch.queries.coords.end(), s.coords.begin(), s.coords.end());
    batch.queries.scales.push_back(s.scale);
    target.insert(target.end(), s.gt_rgb.begin(), s.gt_rgb.end());
  }
  batch.target = Tensor<float>(Shape{n * batch.queries.per_item, 3}, std::move(target));
  return batch;
}

std::string loss_csv(const std::vector<LossRecord>& losses) {
  std::ostringstream out;
  out << "step,lr,loss\n";
  char line[96];
  for (const auto& r : losses) {
    std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g\n", static_cast<long long>(r.step), r.lr, r.loss);
    out << line;
  }
  return out.str();
}

namespace {
void write_text(const std::filesystem::path& path, const std::string& text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  write_file(path, bytes);
}
}  // namespace

TrainResult train(const std::vector<Tensor<float>>& all_images, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOutputs& outputs) {
  validate(cfg);
  if (all_images.empty()) throw TrainingError("train: dataset is empty");
  std::vector<Tensor<float>> images = all_images;
  if (cfg.max_images > 0 && images.size() > static_cast<std::size_t>(cfg.max_images))
    images.resize(static_cast<std::size_t>(cfg.max_images));

  SrModel<float> model(model_cfg);
  Rng init_rng = Rng(cfg.seed).split(0);
  model.init(init_rng);
  ParamList<float> params = model.parameters();
  AdamState<float> adam;
  const Rng data_rng = Rng(cfg.seed).split(1);
  const nlohmann::json train_json = to_json(cfg);

  TrainResult result;
  auto checkpoint_now = [&](std::int64_t step) {
    result.checkpoint = snapshot(model, step, Rng(data_rng.key(), static_cast<std::uint64_t>(step)), train_json);
    if (outputs.checkpoint) save_checkpoint(*outputs.checkpoint, result.checkpoint);
    if (outputs.loss_csv) write_text(*outputs.loss_csv, loss_csv(result.losses));
  };

  std::int64_t step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (int it = 0; it < cfg.iters_per_epoch; ++it, ++step) {
      Batch batch = make_batch(images, cfg, step);
      zero_grads(params);
      const Tensor<float> pred = model.predict(batch.lr, batch.queries);
      const Tensor<float> loss = l1_loss(pred, batch.target);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        Tape<float>::current().clear();
        throw TrainingError("train: non-finite loss at step " + std::to_string(step));
      }
      backward(loss);
      if (cfg.grad_clip > 0) {
        const double norm = clip_grad_norm(params, cfg.grad_clip);
        if (!std::isfinite(norm)) throw TrainingError("train: non-finite gradient at step " + std::to_string(step));
      }
      adam_step(params, adam, lr);
      result.losses.push_back({step, lr, value});
      if (outputs.on_step && !outputs.on_step(result.losses.back())) {
        ++step;
        stop = true;
        break;
      }
    }
    checkpoint_now(step);
  }
  checkpoint_now(step);
  return result;
}

TrainResult train(const std::filesystem::path& dataset_dir, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOutputs& outputs) {
  auto images = load_image_dir(dataset_dir);
  if (images.empty()) throw TrainingError("train: no .png/.ppm images in " + dataset_dir.string());
  return train(images, model_cfg, cfg, outputs);
}

}  // namespace ciaosr
