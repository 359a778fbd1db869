#pragma once

// Experiment configuration and the train / compare runners behind the CLI.
//
// Run directory layout:
//   config.json     effective merged configuration
//   log.csv         one row per (epoch, sequence)
//   curve.csv       one row per epoch
//   checkpoint.bin  trained weights
//   report.json     comparison report (compare only)

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "mtscale/analysis.hpp"
#include "mtscale/data.hpp"
#include "mtscale/network.hpp"
#include "mtscale/training.hpp"

namespace mtscale {

struct ExperimentConfig {
  std::string name = "custom";
  NetworkConfig network;
  TrainConfig training;
  std::string data;
  std::string out;
};

// Table-driven presets for the two studies.
ExperimentConfig preset_case1();
ExperimentConfig preset_case2();

nlohmann::json to_json_value(const ExperimentConfig& cfg);
// Flat object; unknown keys are rejected. "alpha" sets both the network and
// the training mixing ratio.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& cfg);

// Applies MTSCALE_SEED when set; returns the overriding value.
std::optional<std::uint64_t> apply_seed_env(ExperimentConfig& cfg);

using ProgressFn = std::function<void(const std::string&)>;

struct TrainRun {
  Network net;
  TrainingLog log;
};

// Trains one arm and writes config.json, log.csv, curve.csv and
// checkpoint.bin into out_dir. A numeric abort still writes the partial logs.
TrainRun run_training(const ExperimentConfig& cfg, const SequenceSet& data,
                      const std::filesystem::path& out_dir, const ProgressFn& progress = {});

// Both arms from the same config and seed. Per-arm run directories go under
// out_dir/mtrnn and out_dir/mtgru; report.json and the plot CSVs go in out_dir.
ComparisonReport run_comparison(const ExperimentConfig& cfg, const SequenceSet& data,
                                const std::filesystem::path& out_dir, bool serial,
                                const ProgressFn& progress = {});

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace mtscale
