#include "hardmine/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hardmine/errors.hpp"

namespace hardmine {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::set<std::string>& KvConfig::known_keys() {
  static const std::set<std::string> keys = {
      // dataset
      "seed", "num_scenes", "test_scenes", "classes", "feature_dim",
      "proposals_per_scene", "objects_min", "objects_max", "distractor_rate",
      "jitter_scale", "noise_sigma", "scene_width", "scene_height",
      "obj_size_min", "obj_size_max",
      // sampler / trainer
      "strategy", "batch_size", "images_per_batch", "fg_fraction", "bg_lo",
      "fg_thresh", "nms_dedup_iou", "joint_selection", "lr", "lr_decay_factor",
      "lr_decay_every", "total_iters", "snapshot_every", "momentum",
      "hidden_dim", "lambda", "class_agnostic_loc", "normalize_deltas",
      // eval
      "score_thresh", "nms_iou", "iterative_bbox", "rescore_thresh", "vote_iou",
      // ablation
      "ablate_seeds", "ablate_iters", "allrois_lr_multiplier", "allrois_batch",
      "ablate_parallel",
  };
  return keys;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

KvConfig KvConfig::parse_string(const std::string& text,
                                const std::string& source) {
  KvConfig cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": empty key or value");
    if (!known_keys().count(key))
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": unknown config key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

void KvConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string KvConfig::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError(source_ + ": missing required config key '" + key + "'");
  return it->second;
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& def) const {
  const auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double KvConfig::get_double(const std::string& key, double def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "': not a number: " + it->second);
  return v;
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "': not an integer: " + it->second);
  return v;
}

uint32_t KvConfig::get_u32(const std::string& key, uint32_t def) const {
  const uint64_t v = get_u64(key, def);
  if (v > 0xffffffffULL)
    throw ConfigError("config key '" + key + "': value too large");
  return static_cast<uint32_t>(v);
}

bool KvConfig::get_bool(const std::string& key, bool def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

std::string KvConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hardmine
