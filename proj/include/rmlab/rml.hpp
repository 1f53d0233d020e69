#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "rmlab/data.hpp"
#include "rmlab/model.hpp"
#include "rmlab/rng.hpp"

// Regroup median loss estimation.
//
// For a training sample with observed class y, candidates are the other
// members of class y. Each candidate i is weighted by exp(-l_i (l_i + eps))
// (the "processed" loss), n*k of them are drawn without replacement, split at
// random into n groups of k, and the sample's loss is estimated as the median
// of the n group means together with its own loss. n is even, so the median
// is taken over an odd number of values and is always one of them.
//
// Losses come from a per-epoch cache. Within an epoch, a sample's estimate is
// carried forward by the ratio of fresh to cached loss and clamped so it never
// exceeds the fresh loss.
namespace rmlab {

struct RegroupParams {
  std::size_t n = 6;            // number of groups, even
  std::size_t k = 1;            // group size
  double epsilon_bias = 1.0;

  void validate() const;
};

enum class EstimatorVariant {
  full,
  no_processing,     // selection weights exp(-l) instead of exp(-l (l + eps))
  mean_of_selected,  // plain mean of the selected losses instead of the grouped median
};

std::string_view to_string(EstimatorVariant v);
EstimatorVariant parse_estimator_variant(std::string_view name);

struct LossCache {
  std::vector<double> plain;  // per-sample CE at the end of the last epoch
  std::vector<double> rml;    // per-sample corrected estimate
  std::size_t epoch = 0;      // number of refreshes so far

  bool empty() const noexcept { return plain.empty(); }
};

struct SelectionDistribution {
  std::size_t label = 0;
  std::vector<std::size_t> members;
  std::vector<double> processed;          // l (l + eps)
  std::vector<double> probabilities;      // softmax(-processed)
  std::vector<double> log_probabilities;
};

// Selection law over a loss vector; members are 0..m-1 and label 0.
SelectionDistribution selection_probabilities(std::span<const double> losses, double epsilon_bias);
// Selection law over the observed members of `cls` using cached losses.
SelectionDistribution selection_probabilities(const Dataset& dataset, std::span<const double> losses,
                                              std::size_t cls, double epsilon_bias);
// Unprocessed law softmax(-l), for comparison.
std::vector<double> plain_selection_probabilities(std::span<const double> losses);

struct ProbabilityShift {
  std::vector<double> shift;  // log p - log p~, computed directly from both laws
  double beta = 0.0;          // log(sum e^{-l} / sum e^{-l (l + eps)})
};

ProbabilityShift probability_shift(std::span<const double> losses, double epsilon_bias);

struct GroupMeans {
  std::vector<std::vector<std::size_t>> groups;  // positions into the selected-loss vector
  std::vector<double> means;
};

struct RegroupEstimate {
  double estimate = 0.0;
  GroupMeans groups;
};

// Median of the n random group means together with `sample_loss`.
// selected_losses.size() must equal n * k.
RegroupEstimate regroup_median(double sample_loss, std::span<const double> selected_losses,
                               const RegroupParams& params, RngStream& rng);

// Regroup median estimate for one sample from the cached plain losses. When the class
// has fewer than n*k other members, k shrinks to floor((m-1)/n); at zero the
// sample's own cached loss is returned.
double estimate_for_sample(std::size_t sample, const Dataset& dataset, const LossCache& cache,
                           const RegroupParams& params, RngStream rng,
                           EstimatorVariant variant = EstimatorVariant::full);

// fresh * rml[sample] / max(plain[sample], kLossFloor)
double propagate_estimate(const LossCache& cache, std::size_t sample, double fresh_loss);

// min(estimate, original_loss)
double correct_estimate(double estimate, double original_loss);

// Per-sample weights w_i = l_rml_i / max(l_i, floor) such that
// (1/B) sum w_i l_i equals the batch mean of corrected estimates.
std::vector<double> batch_weights(const LossCache& cache, std::span<const std::size_t> batch,
                                  std::span<const double> fresh_losses);

// (1/B) sum_i correct(propagate(i)), computed directly.
double batch_mean_estimate(const LossCache& cache, std::span<const std::size_t> batch,
                           std::span<const double> fresh_losses);

// One forward pass over the dataset, then a fresh corrected estimate for every
// sample. Per-sample randomness is keyed by (new epoch, sample index).
LossCache refresh_cache(const LossCache& cache, const Dataset& dataset, const ModelState& model,
                        const RegroupParams& params, const RngStream& rng,
                        EstimatorVariant variant = EstimatorVariant::full);

}  // namespace rmlab
