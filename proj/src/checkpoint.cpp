#include "ciaosr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>

#include "ciaosr/image_io.hpp"

namespace ciaosr {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> bytes, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[pos + i]) << (8 * i);
  return v;
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, nullptr, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

nlohmann::json header_of(const Checkpoint& ckpt) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) params.push_back({{"name", t.name}, {"shape", t.shape}});
  return {{"format", "ciaosr-checkpoint"},
          {"dtype", "float32"},
          {"model", to_json(ckpt.model)},
          {"params", params},
          {"step", ckpt.step},
          {"rng", {{"key", ckpt.rng_key}, {"counter", ckpt.rng_counter}}},
          {"train", ckpt.train}};
}

struct Framing {
  std::size_t header_begin;
  std::size_t header_len;
};

Framing check_framing(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), "CSRK", 4) != 0) throw CheckpointError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 20) throw CheckpointError("checkpoint: truncated header");
  const std::size_t body = bytes.size() - 4;
  if (crc_of(bytes.first(body)) != get_le<std::uint32_t>(bytes, body))
    throw CheckpointError("checkpoint: checksum mismatch (file corrupt or truncated)");
  return {16, static_cast<std::size_t>(header_len)};
}

nlohmann::json parse_header(std::span<const std::uint8_t> bytes, const Framing& f) {
  try {
    return nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(f.header_begin),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(f.header_begin + f.header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const std::string header = header_of(ckpt).dump();
  std::vector<std::uint8_t> out = {'C', 'S', 'R', 'K'};
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.values.size()) throw CheckpointError("checkpoint: tensor " + t.name + " size mismatch");
    for (float v : t.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  put_le<std::uint32_t>(out, crc_of(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const Framing f = check_framing(bytes);
  const nlohmann::json header = parse_header(bytes, f);
  Checkpoint ckpt;
  try {
    if (header.at("format") != "ciaosr-checkpoint" || header.at("dtype") != "float32")
      throw CheckpointError("checkpoint: unknown format or dtype");
    ckpt.model = model_config_from_json(header.at("model"));
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.rng_key = header.at("rng").at("key").get<std::uint64_t>();
    ckpt.rng_counter = header.at("rng").at("counter").get<std::uint64_t>();
    ckpt.train = header.at("train");
    for (const auto& p : header.at("params"))
      ckpt.tensors.push_back({p.at("name").get<std::string>(), p.at("shape").get<Shape>(), {}});
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  std::size_t expected = 0;
  for (const auto& t : ckpt.tensors) expected += shape_numel(t.shape) * 4;
  const std::size_t payload_begin = f.header_begin + f.header_len;
  const std::size_t payload_len = bytes.size() - 4 - payload_begin;
  if (payload_len != expected)
    throw CheckpointError("checkpoint: payload is " + std::to_string(payload_len) + " bytes, header implies " +
                          std::to_string(expected));
  std::size_t pos = payload_begin;
  for (auto& t : ckpt.tensors) {
    t.values.resize(shape_numel(t.shape));
    for (float& v : t.values) {
      v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
      pos += 4;
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const ImageError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(bytes);
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_header(bytes, check_framing(bytes));
}

Checkpoint snapshot(const SrModel<float>& model, std::int64_t step, const Rng& rng, const nlohmann::json& train) {
  Checkpoint ckpt;
  ckpt.model = model.config();
  ckpt.step = step;
  ckpt.rng_key = rng.key();
  ckpt.rng_counter = rng.counter();
  ckpt.train = train;
  for (const auto& p : model.parameters())
    ckpt.tensors.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  return ckpt;
}

void restore(SrModel<float>& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  if (params.size() != ckpt.tensors.size())
    throw CheckpointError("checkpoint: holds " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.tensors[i];
    auto& dst = params[i];
    if (src.name != dst.name || src.shape != dst.tensor.shape())
      throw CheckpointError("checkpoint: tensor " + src.name + " " + shape_string(src.shape) + " does not match model " +
                            dst.name + " " + shape_string(dst.tensor.shape()));
    std::copy(src.values.begin(), src.values.end(), dst.tensor.data().begin());
  }
}

SrModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  SrModel<float> model(ckpt.model);
  restore(model, ckpt);
  return model;
}

}  // namespace ciaosr
