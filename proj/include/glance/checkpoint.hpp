#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "glance/mlp.hpp"
#include "json.hpp"

namespace glance {

inline constexpr int kCheckpointSchema = 1;

// {"rows","cols","w":[...],"b":[...],"act":"relu"|"id"}
nlohmann::json layer_to_json(const DenseLayer& layer);
DenseLayer layer_from_json(const nlohmann::json& j);

// {"schema":1,"kind":kind,"layers":[...]} merged with any extra header fields.
nlohmann::json mlp_to_json(const MlpModel& model, std::string_view kind,
                           const nlohmann::json& header = nlohmann::json::object());
MlpModel mlp_from_json(const nlohmann::json& j, std::string_view expected_kind);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

// Canonical serialization used for both files and hashes.
std::string canonical_dump(const nlohmann::json& j);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace glance
