#pragma once

#include "filtstab/chain_core.hpp"

#include <json.hpp>

#include <filesystem>

namespace filtstab {

// Model file: { "dim": d, "rates": [[...]], "h": [[...]] (d x m), "R": [[...]] (m x m) }

Matrix matrix_from_json(const nlohmann::json& j, const char* field);
Vector vector_from_json(const nlohmann::json& j, const char* field);
nlohmann::json to_json(const Matrix& m);
nlohmann::json to_json(const Vector& v);

/// Reads "dim" and "rates" only.
Generator generator_from_json(const nlohmann::json& j);
FilterModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const FilterModel& model);

nlohmann::json read_json_file(const std::filesystem::path& path);
FilterModel load_model(const std::filesystem::path& path);

}  // namespace filtstab
