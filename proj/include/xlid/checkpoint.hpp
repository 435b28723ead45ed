#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlid/features.hpp"
#include "xlid/model.hpp"

namespace xlid {

/// Everything needed to run a trained model on new audio.
struct TrainedModel {
  ModelConfig model;
  FeatureConfig features;
  std::vector<std::string> languages;
  ParameterSet params;
};

nlohmann::json to_json(const FeatureConfig& cfg);
FeatureConfig feature_config_from_json(const nlohmann::json& j);

/// Binary checkpoint, little-endian:
///   "XLCK", version u32, config length u32, config JSON,
///   then per parameter: name length u32, name, rank u32, dims u32 x rank,
///   f32 data row-major; parameters run to end of file.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace xlid
