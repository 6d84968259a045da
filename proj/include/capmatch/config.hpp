#pragma once

#include <filesystem>
#include <string>

#include "capmatch/trainer.hpp"

namespace capmatch {

// Flat key=value configuration, one entry per line, '#' starts a comment.
// Unknown keys are rejected by name. Precedence is defaults < file <
// command-line overrides.
ExperimentConfig parse_config_file(const std::filesystem::path& path);
void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value);

// Every key in a fixed order; parseable by parse_config_file.
std::string config_to_string(const ExperimentConfig& cfg);

}  // namespace capmatch
