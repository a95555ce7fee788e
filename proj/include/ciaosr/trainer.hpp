#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ciaosr/checkpoint.hpp"
#include "ciaosr/dataset.hpp"
#include "ciaosr/model.hpp"

namespace ciaosr {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 1000;
  int iters_per_epoch = 1000;
  int batch_size = 16;
  double lr0 = 1e-4;
  double lr_decay_factor = 0.5;
  int lr_decay_every = 200;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 5.0;
  /// Use at most this many training images (0 = all), taken in sorted order.
  int max_images = 0;
  DegradationConfig degradation;
};

void validate(const TrainConfig& cfg);

nlohmann::json to_json(const TrainConfig& cfg);
/// Keys present in j override base; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

/// Step schedule: lr0 * factor^floor(epoch / every).
double learning_rate(const TrainConfig& cfg, int epoch);

/// Minutes-scale CPU run: 8 images, 10 epochs of 300 steps, batch 4.
TrainConfig desk_train_config();
/// Reduced-width network for the desk run.
ModelConfig desk_model_config(HeadVariant variant = HeadVariant::kFull, int local_size = 2);
/// A handful of steps on a tiny network; for tests and CLI smoke runs.
TrainConfig smoke_train_config();
ModelConfig smoke_model_config(HeadVariant variant = HeadVariant::kFull, int local_size = 2);

struct LossRecord {
  std::int64_t step;
  double lr;
  double loss;
};

struct TrainOutputs {
  /// Checkpoint rewritten after every epoch and at the end.
  std::optional<std::filesystem::path> checkpoint;
  /// CSV with header step,lr,loss.
  std::optional<std::filesystem::path> loss_csv;
  /// Called after each step; return false to stop early.
  std::function<bool(const LossRecord&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> losses;
};

TrainResult train(const std::vector<Tensor<float>>& images, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOutputs& outputs = {});
TrainResult train(const std::filesystem::path& dataset_dir, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOutputs& outputs = {});

std::string loss_csv(const std::vector<LossRecord>& losses);

/// Deterministic mini-batch for a global step.
struct Batch {
  Tensor<float> lr;      // N x 3 x p x p
  QueryBatch queries;
  Tensor<float> target;  // (N * per_item) x 3
};
Batch make_batch(const std::vector<Tensor<float>>& images, const TrainConfig& cfg, std::int64_t step);

}  // namespace ciaosr
