#pragma once

// On-disk formats. Binary containers are
//   8 bytes  magic "ADAPTQ01"
//   8 bytes  little-endian u64 header length
//   header   UTF-8 JSON
//   rest     little-endian f32 values

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adaptq/config_space.hpp"
#include "adaptq/stream_model.hpp"

namespace adaptq {

void write_container(const std::filesystem::path& path, const nlohmann::json& header, std::span<const float> blob);
std::pair<nlohmann::json, std::vector<float>> read_container(const std::filesystem::path& path);

nlohmann::json dataset_to_json(std::span<const VideoStream> videos);
std::vector<VideoStream> dataset_from_json(const nlohmann::json& j);

// {entries:[{r,l,s,fps,tpr,tnr[,f1]}], beta}
nlohmann::json table_to_json(const ConfigTable& table);
ConfigTable table_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace adaptq
