#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "mrnr/config.hpp"
#include "mrnr/pipeline.hpp"
#include "mrnr/synth.hpp"

namespace mrnr {

/// Stage names in pipeline order.
inline constexpr const char* kStages[] = {"simulate", "design", "snapshot", "extract", "train", "evaluate"};

/// Throws ConfigError when a setting cannot drive any stage.
void validate_config(const PipelineConfig& cfg);

/// Writes a generated experiment in the on-disk layout read by `read_experiment`.
void write_experiment(const SynthExperiment& synth, const std::filesystem::path& data_dir);

/// Loads subjects, atlas and reference; pipeline params come from `cfg`.
Experiment read_experiment(const PipelineConfig& cfg);

/// Runs one stage (or `pipeline`) against the directories named by `cfg`.
/// Progress and the final report go to `log`.
void run_stage(const std::string& command, const PipelineConfig& cfg, std::ostream& log);

/// Name of the stage that ran last (or is running) in this process.
const std::string& active_stage();

/// Exit status for an exception: 2 config, 3 data/format/lookup, 4 numerical, 1 anything else.
int exit_code_for(const std::exception& e);

/// Machine-readable error record printed and written to <out>/error.json on failure.
nlohmann::ordered_json error_record(const std::exception& e, const std::string& stage);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mrnr
