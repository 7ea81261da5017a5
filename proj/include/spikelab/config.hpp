#pragma once

// JSON model configuration:
//
//   {"d": 10000, "n": 200,
//    "tiers": [{"multiplicity": 1, "c": 0.2}, {"multiplicity": 1, "c": "0", "lambda": 5000}],
//    "basis": "identity" | "random-orthogonal", "basis_seed": 7,
//    "mean": "zero" | [numbers], "min_spike": 5}
//
// Errors are ModelError with key() naming the offending field.

#include <filesystem>

#include <json.hpp>

#include "spikelab/model.hpp"

namespace spikelab {

ModelConfig model_config_from_json(const nlohmann::json& doc);
ModelConfig load_model_config(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& config);

}  // namespace spikelab
