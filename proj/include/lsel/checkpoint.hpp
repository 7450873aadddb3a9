#pragma once

// Model checkpoint ("LLM1"). All integers little-endian, reals IEEE-754 f32:
//
//   magic "LLM1"
//   u32 in_dim, u32 out_dim, u32 rank, u32 hidden, u32 layer
//   f32 scale, f32 lora_alpha, f32 tau
//   payload, in order:
//     normalizer mean[in_dim], normalizer scale[in_dim]
//     base W[out_dim x in_dim], base bias[out_dim]
//     A[rank x in_dim], B[out_dim x rank]
//     detection W1[hidden x out_dim], b1[hidden], w2[hidden], b2[1]
//     quality   W1[hidden x out_dim], b1[hidden], W2[3 x hidden], b2[3]

#include <filesystem>
#include <span>

#include "lsel/adapter.hpp"
#include "lsel/heads.hpp"

namespace lsel {

inline constexpr char kCheckpointMagic[4] = {'L', 'L', 'M', '1'};

// Per-feature standardization fitted on the training split.
struct Normalizer {
  Vector mean;
  Vector scale;

  static Normalizer fit(std::span<const Vector> rows);
  Vector apply(std::span<const double> x) const;

  bool operator==(const Normalizer&) const = default;
};

struct Checkpoint {
  adapter::EncoderConfig encoder_config;
  std::size_t layer = 0;
  std::size_t hidden = 0;
  Normalizer normalizer;
  adapter::LoraLinear encoder;
  heads::DetectionHead detection;
  heads::QualityHead quality;

  // Encoder output for one raw feature vector of `layer`.
  Vector embed(std::span<const double> raw) const;

  bool operator==(const Checkpoint& o) const {
    return layer == o.layer && hidden == o.hidden && normalizer == o.normalizer && encoder == o.encoder &&
           detection == o.detection && quality == o.quality;
  }
};

struct CheckpointHeader {
  std::uint32_t in_dim = 0, out_dim = 0, rank = 0, hidden = 0, layer = 0;
  float scale = 0, lora_alpha = 0, tau = 0;
  std::size_t payload_floats = 0;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

// Round every parameter to f32, as a write/read cycle would.
Checkpoint round_to_f32(const Checkpoint& ckpt);

}  // namespace lsel
