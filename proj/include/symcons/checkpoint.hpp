#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "symcons/encoder.hpp"
#include "symcons/errors.hpp"
#include "symcons/optimizer.hpp"
#include "symcons/trainer.hpp"

namespace symcons {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointVersionError : public DataError {
 public:
  using DataError::DataError;
};
class CheckpointTruncatedError : public DataError {
 public:
  using DataError::DataError;
};
class CheckpointShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Everything needed to resume or transfer a model.
///
/// File layout: "SYMC", u32 LE format version, u64 LE manifest length, the
/// manifest text, then little-endian float64 arrays at the offsets the manifest
/// lists. The manifest has one "key value" pair per line followed by
/// "array <name> <d0,d1,...> <offset> <count>" lines.
struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  ModelConfig model_config;
  std::optional<TrainConfig> train_config;
  ModelRole role = ModelRole::randomly_initialized;
  std::size_t global_step = 0;
  std::map<std::string, Tensor> params;
  AdamMoments moments;

  static Checkpoint from_model(const ModelState& model);
  static Checkpoint from_training(const TrainResult& result, const TrainConfig& config);
  ModelState to_model() const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace symcons
