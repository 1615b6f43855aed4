#include "adaptq/apfg_sim.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "adaptq/errors.hpp"
#include "adaptq/rng.hpp"
#include "adaptq/serialization.hpp"

namespace adaptq {

void ApfgParams::validate() const {
  if (feature_dim < 4) throw InvalidParams(fmt::format("feature_dim {} < 4", feature_dim));
  if (!(noise_scale >= 0.0)) throw InvalidParams("noise_scale must be non-negative");
  if (lookahead < 0) throw InvalidParams("lookahead must be non-negative");
}

ApfgSim::ApfgSim(ApfgParams params) : params_(params) { params_.validate(); }

ApfgOutput ApfgSim::invoke(const VideoStream& video, Frame start, const ConfigTable& table, std::size_t config,
                           Frame limit) const {
  if (start < 0 || start >= video.num_frames)
    throw ContractViolation(fmt::format("start {} outside video {} of {} frames", start, video.id, video.num_frames));
  const auto& entry = table.entry(config);
  const Frame full_span = entry.config.span();
  Frame end = std::min(start + full_span, video.num_frames);
  if (limit >= 0) end = std::min(end, limit);
  if (end <= start) throw ContractViolation(fmt::format("empty window at {} (limit {})", start, limit));

  ApfgOutput out;
  out.window = {start, end};
  out.ground_label = window_label(video, start, end, params_.label_mode);
  out.cost_seconds = invocation_time(entry.config, entry.profile) * static_cast<double>(end - start) /
                     static_cast<double>(full_span);

  CounterRng rng(mix_key({params_.seed, static_cast<std::uint64_t>(video.id), config,
                          static_cast<std::uint64_t>(start)}));
  const double p_correct = out.ground_label ? entry.profile.tpr : entry.profile.tnr;
  const bool correct = rng.uniform() < p_correct;
  out.prediction = correct ? out.ground_label : !out.ground_label;

  const double sigma = params_.noise_scale * (1.0 - 0.5 * (entry.profile.tpr + entry.profile.tnr));
  const double in_window = static_cast<double>(action_frames_in(video, start, end)) / static_cast<double>(end - start);
  const Frame ahead_end = std::min(end + params_.lookahead, video.num_frames);
  const double ahead = ahead_end > end ? static_cast<double>(action_frames_in(video, end, ahead_end)) /
                                             static_cast<double>(ahead_end - end)
                                       : 0.0;

  out.feature.assign(params_.feature_dim, 0.0f);
  auto noise = [&] { return sigma > 0.0 ? sigma * rng.normal() : 0.0; };
  out.feature[0] = static_cast<float>(in_window + noise());
  out.feature[1] = static_cast<float>(ahead + noise());
  out.feature[2] = static_cast<float>(static_cast<double>(start) / static_cast<double>(video.num_frames));
  out.feature[3] = static_cast<float>(static_cast<double>(config) / static_cast<double>(table.size()));
  for (std::size_t k = 4; k < params_.feature_dim; ++k) out.feature[k] = static_cast<float>(noise());
  return out;
}

std::vector<std::uint8_t> reachable_starts(Frame num_frames, std::span<const Frame> spans) {
  std::vector<std::uint8_t> reach(static_cast<std::size_t>(std::max<Frame>(num_frames, 0)), 0);
  if (num_frames <= 0) return reach;
  reach[0] = 1;
  for (Frame f = 0; f < num_frames; ++f) {
    if (!reach[static_cast<std::size_t>(f)]) continue;
    for (Frame s : spans)
      if (s > 0 && f + s < num_frames) reach[static_cast<std::size_t>(f + s)] = 1;
  }
  return reach;
}

FeatureCache precompute_features(const ApfgSim& sim, std::span<const VideoStream> videos, const ConfigTable& table) {
  FeatureCache cache;
  cache.num_configs_ = table.size();
  cache.feature_dim_ = sim.params().feature_dim;
  cache.seed_ = sim.params().seed;
  std::vector<Frame> spans;
  for (const auto& e : table.entries()) spans.push_back(e.config.span());
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());

  for (const auto& video : videos) {
    if (cache.videos_.contains(video.id))
      throw ContractViolation(fmt::format("duplicate video id {} in feature cache", video.id));
    FeatureCache::VideoSlots slots;
    slots.num_frames = video.num_frames;
    const auto reach = reachable_starts(video.num_frames, spans);
    slots.slot_of_start.assign(reach.size(), -1);
    std::int32_t next = 0;
    for (std::size_t f = 0; f < reach.size(); ++f)
      if (reach[f]) slots.slot_of_start[f] = next++;
    slots.outputs.reserve(static_cast<std::size_t>(next) * table.size());
    for (std::size_t f = 0; f < reach.size(); ++f) {
      if (!reach[f]) continue;
      for (std::size_t c = 0; c < table.size(); ++c)
        slots.outputs.push_back(sim.invoke(video, static_cast<Frame>(f), table, c));
    }
    cache.video_order_.push_back(video.id);
    cache.videos_.emplace(video.id, std::move(slots));
  }
  return cache;
}

const ApfgOutput& FeatureCache::at(std::int64_t video_id, Frame start, std::size_t config) const {
  auto it = videos_.find(video_id);
  if (it == videos_.end()) throw ContractViolation(fmt::format("feature cache has no video {}", video_id));
  const auto& slots = it->second;
  if (config >= num_configs_ || start < 0 || start >= slots.num_frames ||
      slots.slot_of_start[static_cast<std::size_t>(start)] < 0)
    throw ContractViolation(
        fmt::format("feature cache miss: video {} start {} config {}", video_id, start, config));
  const auto slot = static_cast<std::size_t>(slots.slot_of_start[static_cast<std::size_t>(start)]);
  return slots.outputs[slot * num_configs_ + config];
}

bool FeatureCache::contains(std::int64_t video_id, Frame start, std::size_t config) const {
  auto it = videos_.find(video_id);
  if (it == videos_.end() || config >= num_configs_ || start < 0 || start >= it->second.num_frames) return false;
  return it->second.slot_of_start[static_cast<std::size_t>(start)] >= 0;
}

ApfgOutput FeatureCache::observe(const VideoStream& video, Frame start, std::size_t config) const {
  return at(video.id, start, config);
}

std::size_t FeatureCache::size() const {
  std::size_t n = 0;
  for (const auto& [id, slots] : videos_) n += slots.outputs.size();
  return n;
}

// Record layout: feature_dim f32 features, then f32 prediction, f32 ground
// label, f32 cost_seconds, f32 window end.
void FeatureCache::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["format"] = "apfg-feature-cache";
  header["feature_dim"] = feature_dim_;
  header["num_configs"] = num_configs_;
  header["seed"] = seed_;
  header["record_floats"] = feature_dim_ + 4;
  std::vector<float> blob;
  std::size_t record = 0;
  for (std::int64_t id : video_order_) {
    const auto& slots = videos_.at(id);
    nlohmann::json starts = nlohmann::json::array();
    for (std::size_t f = 0; f < slots.slot_of_start.size(); ++f)
      if (slots.slot_of_start[f] >= 0) starts.push_back(f);
    header["videos"].push_back(
        {{"id", id}, {"num_frames", slots.num_frames}, {"first_record", record}, {"starts", std::move(starts)}});
    for (const auto& o : slots.outputs) {
      blob.insert(blob.end(), o.feature.begin(), o.feature.end());
      blob.push_back(o.prediction ? 1.0f : 0.0f);
      blob.push_back(o.ground_label ? 1.0f : 0.0f);
      blob.push_back(static_cast<float>(o.cost_seconds));
      blob.push_back(static_cast<float>(o.window.end));
      ++record;
    }
  }
  write_container(path, header, blob);
}

FeatureCache FeatureCache::load(const std::filesystem::path& path) {
  auto [header, blob] = read_container(path);
  if (header.value("format", "") != "apfg-feature-cache")
    throw InvalidParams(fmt::format("{} is not a feature cache", path.string()));
  FeatureCache cache;
  cache.feature_dim_ = header.at("feature_dim").get<std::size_t>();
  cache.num_configs_ = header.at("num_configs").get<std::size_t>();
  cache.seed_ = header.at("seed").get<std::uint64_t>();
  const std::size_t rf = cache.feature_dim_ + 4;
  for (const auto& v : header.at("videos")) {
    VideoSlots slots;
    slots.num_frames = v.at("num_frames").get<Frame>();
    slots.slot_of_start.assign(static_cast<std::size_t>(slots.num_frames), -1);
    std::size_t record = v.at("first_record").get<std::size_t>();
    std::int32_t slot = 0;
    for (const auto& s : v.at("starts")) {
      const auto start = s.get<Frame>();
      slots.slot_of_start[static_cast<std::size_t>(start)] = slot++;
      for (std::size_t c = 0; c < cache.num_configs_; ++c, ++record) {
        if ((record + 1) * rf > blob.size()) throw InvalidParams("feature cache blob truncated");
        const float* r = blob.data() + record * rf;
        ApfgOutput o;
        o.feature.assign(r, r + cache.feature_dim_);
        o.prediction = r[cache.feature_dim_] != 0.0f;
        o.ground_label = r[cache.feature_dim_ + 1] != 0.0f;
        o.cost_seconds = r[cache.feature_dim_ + 2];
        o.window = {start, static_cast<Frame>(r[cache.feature_dim_ + 3])};
        slots.outputs.push_back(std::move(o));
      }
    }
    const auto id = v.at("id").get<std::int64_t>();
    cache.video_order_.push_back(id);
    cache.videos_.emplace(id, std::move(slots));
  }
  return cache;
}

}  // namespace adaptq
