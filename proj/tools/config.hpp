#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fusiondiag/model.hpp"
#include "fusiondiag/synth.hpp"
#include "fusiondiag/training.hpp"

namespace fdiag::cli {

enum class DataSource { none, manifest, synth };

/// Merged run configuration. Values come from defaults, then the INI config
/// file, then command-line flags.
struct CliConfig {
  ModelSpec model;
  bool kind_set = false;
  TrainConfig train;
  SynthSpec synth;
  DataSource source = DataSource::none;
  std::filesystem::path manifest;
  std::filesystem::path out_dir = ".";
};

// Sections [model] [train] [synth] [data] [output]; unknown keys are errors.
// Relative paths are resolved against the config file's directory.
void apply_config_file(CliConfig& config, const std::filesystem::path& path);

std::vector<ConvStage> parse_conv_stages(const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& text);
std::string format_conv_stages(const std::vector<ConvStage>& stages);

}  // namespace fdiag::cli
