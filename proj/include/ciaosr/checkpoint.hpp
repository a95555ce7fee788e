#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ciaosr/model.hpp"

// Layout: "CSRK" | u32 version | u64 header length | JSON header |
// float32 payload in header order | u32 CRC-32 of everything before it.
// All integers little-endian.
namespace ciaosr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig model;
  std::int64_t step = 0;
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
  nlohmann::json train = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parses only the JSON header (no payload validation beyond framing).
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

Checkpoint snapshot(const SrModel<float>& model, std::int64_t step, const Rng& rng,
                    const nlohmann::json& train = nlohmann::json::object());

/// Copies checkpoint tensors into the model; names and shapes must match.
void restore(SrModel<float>& model, const Checkpoint& ckpt);

SrModel<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace ciaosr
