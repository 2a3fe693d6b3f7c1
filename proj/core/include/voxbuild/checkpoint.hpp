#ifndef VOXBUILD_CHECKPOINT_HPP_
#define VOXBUILD_CHECKPOINT_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxbuild/encoder.hpp"

namespace voxbuild {

// Checkpoint container: magic, format version, model kind, encoder config,
// optional extra u32 fields (grid dims for builder models), then named
// tensors as (name, shape, little-endian f64 data).
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kKindEncoder = 1;
inline constexpr std::uint32_t kKindBuilder = 2;

struct RawCheckpoint {
  std::uint32_t kind = 0;
  EncoderConfig config;
  std::vector<std::uint32_t> extra;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_raw_checkpoint(const std::string& path, const RawCheckpoint& ckpt);
RawCheckpoint load_raw_checkpoint(const std::string& path);

void save_checkpoint(const EncoderState& state, const std::string& path);
EncoderState load_checkpoint(const std::string& path);

// Exact on-disk size of an encoder checkpoint with this config, in bytes.
std::size_t encoder_checkpoint_size(const EncoderConfig& config);

}  // namespace voxbuild

#endif  // VOXBUILD_CHECKPOINT_HPP_
