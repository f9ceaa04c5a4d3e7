#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "trainer/model.hpp"

namespace kinscope {

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Writes the model as a self-describing container (see docs/checkpoint.md).
/// Values are stored as float32; `metadata` is copied into the header.
void save_checkpoint(const DetectorModel& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
std::string serialize_checkpoint(const DetectorModel& model, const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<DetectorModel> model;
  nlohmann::json metadata;
};

/// Rebuilds the model from its stored config, then fills every named array.
/// Missing, extra or mis-shaped arrays raise ParseError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint parse_checkpoint(std::string_view bytes);

}  // namespace kinscope
