#ifndef CTAP_CHECKPOINT_HPP
#define CTAP_CHECKPOINT_HPP

// Single-file checkpoint container. Layout (all integers little-endian):
//
//   char[8]  magic "CTAPCKPT"
//   u32      format version (1)
//   i64      step
//   u32 n, n bytes   model configuration (key = value lines)
//   u32 n, n bytes   effective run configuration (may be empty)
//   u32 n, n bytes   comma-separated names of sub-networks that have been trained
//   u32      tensor count
//   per tensor:
//     u32 n, n bytes  name
//     u8              section: 0 parameter, 1 Adam first moment, 2 Adam second moment
//     u32 rows, u32 cols
//     rows*cols f32   row-major values
//   u64      FNV-1a 64 of every preceding byte

#include "ctap/model.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace ctap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct AdamState {
  std::map<std::string, Matrix<float>> m;
  std::map<std::string, Matrix<float>> v;
};

struct Checkpoint {
  ModelConfig model;
  Parameters<float> params;
  AdamState adam;
  std::string run_config;
  std::set<std::string> trained;  // sub-network prefixes updated by some training stage
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Hash of the serialized checkpoint with the run-configuration echo blanked:
// covers step, model config, parameters and optimizer moments.
std::uint64_t checkpoint_hash(const Checkpoint& ckpt);

}  // namespace ctap

#endif  // CTAP_CHECKPOINT_HPP
