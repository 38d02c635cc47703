#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mrnr/pipeline.hpp"
#include "mrnr/synth.hpp"

namespace mrnr {

/// Settings for one CLI run. Every field has a default; see README for the key list.
struct PipelineConfig {
  std::filesystem::path out = "mrnr_out";
  std::filesystem::path data_dir;   // empty: <out>/data, produced by `simulate`
  std::filesystem::path atlas;      // empty: <data>/atlas.vol
  std::filesystem::path reference;  // empty: <data>/reference.vol

  PipelineParams params;
  std::string target = "cat0";
  std::uint64_t seed = 42;
  bool shuffle_labels = false;  // null control: permute labels with a seed derived from `seed`
  SynthConfig synth;

  std::filesystem::path data_path() const { return data_dir.empty() ? out / "data" : data_dir; }
  std::filesystem::path atlas_path() const { return atlas.empty() ? data_path() / "atlas.vol" : atlas; }
  std::filesystem::path reference_path() const {
    return reference.empty() ? data_path() / "reference.vol" : reference;
  }
  std::optional<std::uint64_t> shuffle_seed() const;

  /// Effective values of every key, paths included when `with_paths`.
  nlohmann::ordered_json to_json(bool with_paths = true) const;
};

/// `key = value` lines; `[section]` prefixes following keys with `section.`.
/// `#` starts a comment; values may be double-quoted. Duplicate keys are errors.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);

/// Applies one key; throws ConfigError naming unknown keys or bad values.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);

PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace mrnr
