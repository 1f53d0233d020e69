#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmlab/data.hpp"
#include "rmlab/model.hpp"
#include "rmlab/noise.hpp"
#include "rmlab/trainer.hpp"
#include "rmlab/verify.hpp"

// Config-driven experiment orchestration behind the `rmlab` command line.
namespace rmlab {

struct DatasetSpec {
  std::string source;  // blobs | moons | idx | container
  std::size_t num_classes = 10;
  std::size_t per_class = 500;
  std::size_t dim = 2;
  double separation = 4.0;
  double noise_stdev = 0.1;  // moons
  std::string images;        // idx
  std::string labels;        // idx
  std::string train;         // container
  std::string test;          // container
  double test_fraction = 0.2;
  bool standardize = true;
};

struct ModelSpec {
  Architecture architecture = Architecture::mlp;
  std::size_t hidden = 64;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::optional<NoiseSpec> noise;
  ModelSpec model;
  OptimizerConfig optimizer;
  RunConfig run;
  std::vector<std::uint64_t> ablate_seeds;
  nlohmann::json verify = nlohmann::json::object();
  std::filesystem::path out = ".";
  bool has_dataset = false;
  bool has_run = false;
};

// Strict parse: unknown keys and missing required keys are rejected with the
// dotted path of the offending field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct PreparedData {
  Dataset train;
  Dataset test;
};

// Builds (or loads) the clean train/test split, standardizes on the train
// split, then corrupts the train labels only. The test split stays clean.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

ModelState make_model(const ExperimentConfig& config, const Dataset& train, std::uint64_t seed);

// prepare_data + make_model + train, with the run seed replaced by `seed`.
TrainResult run_training(const ExperimentConfig& config, std::uint64_t seed);
TrainResult run_training(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed);

void write_mask_csv(const std::filesystem::path& path, const Dataset& dataset);
// sample_id,true_label,observed_label,loss_plain,loss_rml,is_corrupted
void write_cache_csv(const std::filesystem::path& path, const Dataset& dataset, const LossCache& cache);

nlohmann::json to_json(const verify::Report& report);

struct CommandResult {
  int exit_code = 0;
  nlohmann::json report;
  std::vector<std::filesystem::path> files;
};

CommandResult cmd_inject(const ExperimentConfig& config);
CommandResult cmd_train(const ExperimentConfig& config);
// suite: prop1 | prop2 | cor1 | mom | all
CommandResult cmd_verify(const ExperimentConfig& config, const std::string& suite);
CommandResult cmd_ablate(const ExperimentConfig& config);

}  // namespace rmlab
