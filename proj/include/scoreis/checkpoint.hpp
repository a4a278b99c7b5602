#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "scoreis/schedule.hpp"
#include "scoreis/score_models.hpp"

namespace scoreis {

inline constexpr int kCheckpointVersion = 1;

struct TrainingMeta {
  int epochs = 0;
  std::int64_t batch = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::string optimizer = "adam";
};

struct Checkpoint {
  MlpScoreParams params;
  NoiseSchedule schedule;
  nlohmann::json dataset_meta = nlohmann::json::object();
  TrainingMeta training_meta;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
/// Throws IoError naming the offending field.
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Generator name plus its pinned constants.
nlohmann::json dataset_meta_for(const std::string& name);

}  // namespace scoreis
