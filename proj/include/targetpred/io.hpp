#pragma once

// File formats.
//
// Dataset: a CSV with a header row and one row per subject (p covariate
// columns followed by m response columns) plus a JSON manifest
//   {"schema": "targetpred/v1", "kind": "dataset", "csv": <file>, "p": p, "m": m, "tau": [...]}
// with the CSV path resolved relative to the manifest.
//
// Posterior: a flat little-endian array of doubles (<stem>.bin) and a JSON
// sidecar (<stem>.json) listing each field's name, shape and offset.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "targetpred/action_solver.hpp"
#include "targetpred/common.hpp"
#include "targetpred/model_core.hpp"

namespace targetpred {

inline constexpr const char* kSchema = "targetpred/v1";

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Throws InputError unless j["schema"] is the current schema tag.
void check_schema(const nlohmann::json& j, const std::string& what);

/// Writes <manifest> and the CSV next to it (same stem, .csv extension).
void write_dataset(const std::filesystem::path& manifest, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& manifest);

/// Writes <stem>.bin and <stem>.json.
void write_posterior(const std::filesystem::path& stem, const PosteriorDrawSet& post);
/// Accepts either the sidecar path or the stem.
PosteriorDrawSet read_posterior(const std::filesystem::path& sidecar_or_stem);

nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Matrix& m);
Vector vector_from_json(const nlohmann::json& j, const std::string& what);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LambdaPath& path);
LambdaPath path_from_json(const nlohmann::json& j);

}  // namespace targetpred
