#include "adaptq/serialization.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "adaptq/errors.hpp"

namespace adaptq {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'D', 'A', 'P', 'T', 'Q', '0', '1'};

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::out | std::ios::trunc | mode);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return out;
}

}  // namespace

void write_container(const std::filesystem::path& path, const nlohmann::json& header, std::span<const float> blob) {
  auto out = open_out(path, std::ios::binary);
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size_bytes()));
  if (!out) throw std::runtime_error(fmt::format("short write to {}", path.string()));
}

std::pair<nlohmann::json, std::vector<float>> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  std::array<char, 8> magic{};
  std::uint64_t len = 0;
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || magic != kMagic) throw InvalidParams(fmt::format("{}: bad container magic", path.string()));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw InvalidParams(fmt::format("{}: truncated header", path.string()));
  std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(float) != 0) throw InvalidParams(fmt::format("{}: ragged f32 blob", path.string()));
  std::vector<float> blob(rest.size() / sizeof(float));
  std::memcpy(blob.data(), rest.data(), rest.size());
  return {nlohmann::json::parse(text), std::move(blob)};
}

nlohmann::json dataset_to_json(std::span<const VideoStream> videos) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : videos) {
    nlohmann::json inst = nlohmann::json::array();
    for (const auto& a : v.instances) inst.push_back({a.start, a.end});
    arr.push_back({{"id", v.id}, {"num_frames", v.num_frames}, {"instances", std::move(inst)}});
  }
  return {{"videos", std::move(arr)}};
}

std::vector<VideoStream> dataset_from_json(const nlohmann::json& j) {
  std::vector<VideoStream> out;
  for (const auto& v : j.at("videos")) {
    VideoStream s;
    s.id = v.at("id").get<std::int64_t>();
    s.num_frames = v.at("num_frames").get<Frame>();
    for (const auto& a : v.at("instances")) s.instances.push_back({a.at(0).get<Frame>(), a.at(1).get<Frame>()});
    validate_stream(s);
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json table_to_json(const ConfigTable& table) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : table.entries()) {
    nlohmann::json j = {{"r", e.config.resolution},
                        {"l", e.config.segment_length},
                        {"s", e.config.sampling_rate},
                        {"fps", e.profile.throughput_fps},
                        {"tpr", e.profile.tpr},
                        {"tnr", e.profile.tnr}};
    if (e.profile.measured()) j["f1"] = e.profile.f1_validation;
    entries.push_back(std::move(j));
  }
  return {{"entries", std::move(entries)}, {"beta", table.beta()}};
}

ConfigTable table_from_json(const nlohmann::json& j) {
  std::vector<ConfigEntry> entries;
  for (const auto& e : j.at("entries")) {
    ConfigEntry c;
    c.config = {e.at("r").get<int>(), e.at("l").get<int>(), e.at("s").get<int>()};
    c.profile.throughput_fps = e.at("fps").get<double>();
    c.profile.tpr = e.value("tpr", 1.0);
    c.profile.tnr = e.value("tnr", 1.0);
    if (e.contains("f1")) c.profile.f1_validation = e.at("f1").get<double>();
    entries.push_back(c);
  }
  std::optional<double> beta;
  if (j.contains("beta") && !j.at("beta").is_null()) beta = j.at("beta").get<double>();
  return ConfigTable(std::move(entries), beta);
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  return nlohmann::json::parse(in);
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path, std::ios::binary);
  out << text;
}

}  // namespace adaptq
