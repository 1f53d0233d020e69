#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "rmlab/data.hpp"
#include "rmlab/model.hpp"
#include "rmlab/rml.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

enum class TrainMode { ce, rml, rml_semi };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct RunConfig {
  std::size_t total_epochs = 100;   // T1
  std::size_t common_epochs = 100;  // T2: epochs t <= T2 (1-based) use the common body
  std::size_t batch_size = 128;
  std::size_t warmup_epochs = 5;    // plain CE epochs before the first cache refresh
  RegroupParams regroup;
  double lambda = 0.999;            // teacher EMA weight
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::rml;
  EstimatorVariant variant = EstimatorVariant::full;

  void validate() const;
};

// One row per epoch. Fields that do not apply to the run are NaN.
struct MetricsRow {
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double train_loss = 0.0;  // mean batch objective
  double test_accuracy = 0.0;
  double clean_mean_loss = 0.0;
  double noisy_mean_loss = 0.0;
  double clean_mean_selection_prob = 0.0;
  double noisy_mean_selection_prob = 0.0;
  double labeled_fraction = 0.0;
};

struct TrainResult {
  ModelState student;
  ModelState teacher;
  std::vector<MetricsRow> metrics;
  LossCache cache;  // last refreshed cache (empty for ce)
};

// Plain cross-entropy baseline.
TrainResult train_ce(const Dataset& train, const Dataset& test, ModelState model,
                     OptimizerState optimizer, const RunConfig& config);

// Warmup with plain CE, then every step reweights the batch by its corrected
// RML estimates from the frozen cache; the teacher follows by EMA after every
// step and the cache is refreshed at the end of each epoch.
TrainResult train_rml(const Dataset& train, const Dataset& test, ModelState model, ModelState teacher,
                      OptimizerState optimizer, const RunConfig& config);

// train_rml's epoch body for epochs <= T2; afterwards each epoch separates the
// training set by student/teacher agreement and trains on mixup of labeled
// samples with unlabeled features.
TrainResult train_rml_semi(const Dataset& train, const Dataset& test, ModelState model, ModelState teacher,
                           OptimizerState optimizer, const RunConfig& config);

// Dispatches on config.mode. The teacher starts as a copy of `model`.
TrainResult train(const Dataset& train, const Dataset& test, ModelState model,
                  const OptimizerConfig& optimizer, const RunConfig& config);

struct Separation {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

// Labeled iff the student's and the teacher's predictions both equal the
// observed label.
Separation separate(const Dataset& dataset, const ModelState& student, const ModelState& teacher);

struct MixupBatch {
  Matrix features;
  std::vector<std::size_t> labels;
  double gamma = 1.0;
};

// gamma = max(raw, 1 - raw); mixed = gamma * labeled + (1 - gamma) * unlabeled.
MixupBatch mixup_with_gamma(const Matrix& labeled, std::span<const std::size_t> labels,
                            const Matrix& unlabeled, double raw_gamma);
// raw gamma drawn uniformly from [0, 1].
MixupBatch mixup_batch(const Matrix& labeled, std::span<const std::size_t> labels,
                       const Matrix& unlabeled, RngStream& rng);

// Header: epoch,learning_rate,train_loss,test_accuracy,clean_mean_loss,
// noisy_mean_loss,clean_mean_selection_prob,noisy_mean_selection_prob,
// labeled_fraction. Values use 17 significant digits; NaN prints as "nan".
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

}  // namespace rmlab
