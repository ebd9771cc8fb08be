#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "topoprior/model.hpp"
#include "topoprior/training.hpp"

namespace topoprior {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything a Trainer needs beyond the model to continue a run.
struct TrainerSnapshot {
  TrainConfig config;
  AdamState adam;
  TrainCursor cursor;
  std::vector<EpochLoss> log;
};

struct Checkpoint {
  TopoPriorModel model;
  std::optional<TrainerSnapshot> trainer;
  /// Free-form run context, e.g. the embedding provider settings.
  nlohmann::json metadata = nlohmann::json::object();
};

TrainerSnapshot snapshot(const Trainer& trainer);

/// Layout: "TPCK", u32 version, u64 header length, JSON header (config,
/// block names and shapes, optimizer cursor, log), raw little-endian
/// doubles, u64 FNV-1a checksum of all preceding bytes.
std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws CheckpointError on bad magic, version, shapes or checksum.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// Trainer continuing exactly where the snapshot left off.
Trainer resume_trainer(const Checkpoint& checkpoint, Mat role_embeddings,
                       std::vector<EncodedRecord> records);

}  // namespace topoprior
