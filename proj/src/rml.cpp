#include "rmlab/rml.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <string>

#include "rmlab/error.hpp"
#include "rmlab/numerics.hpp"

namespace rmlab {

void RegroupParams::validate() const {
  if (n == 0 || n % 2 != 0) throw InvalidInput("regroup n must be a positive even number");
  if (k == 0) throw InvalidInput("regroup k must be >= 1");
  if (!std::isfinite(epsilon_bias)) throw InvalidInput("epsilon_bias must be finite");
}

std::string_view to_string(EstimatorVariant v) {
  switch (v) {
    case EstimatorVariant::full: return "full";
    case EstimatorVariant::no_processing: return "no_processing";
    case EstimatorVariant::mean_of_selected: return "no_median";
  }
  return "unknown";
}

EstimatorVariant parse_estimator_variant(std::string_view name) {
  if (name == "full") return EstimatorVariant::full;
  if (name == "no_processing") return EstimatorVariant::no_processing;
  if (name == "no_median" || name == "mean_of_selected") return EstimatorVariant::mean_of_selected;
  throw InvalidInput("unknown estimator variant '" + std::string(name) + "'");
}

namespace {

void check_losses(std::span<const double> losses) {
  if (losses.empty()) throw InvalidInput("selection needs at least one loss");
  for (double l : losses) {
    if (!std::isfinite(l) || l < 0.0) throw InvalidInput("losses must be finite and nonnegative");
  }
}

}  // namespace

SelectionDistribution selection_probabilities(std::span<const double> losses, double epsilon_bias) {
  check_losses(losses);
  SelectionDistribution dist;
  dist.members.resize(losses.size());
  std::iota(dist.members.begin(), dist.members.end(), std::size_t{0});
  dist.processed.resize(losses.size());
  std::vector<double> neg(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    dist.processed[i] = losses[i] * (losses[i] + epsilon_bias);
    neg[i] = -dist.processed[i];
  }
  dist.log_probabilities = log_softmax(neg);
  dist.probabilities.resize(losses.size());
  std::transform(dist.log_probabilities.begin(), dist.log_probabilities.end(), dist.probabilities.begin(),
                 [](double lp) { return std::exp(lp); });
  return dist;
}

SelectionDistribution selection_probabilities(const Dataset& dataset, std::span<const double> losses,
                                              std::size_t cls, double epsilon_bias) {
  if (losses.size() != dataset.size()) throw InvalidInput("loss vector does not cover the dataset");
  const auto members = dataset.members(cls);
  std::vector<double> member_losses(members.size());
  for (std::size_t j = 0; j < members.size(); ++j) member_losses[j] = losses[members[j]];
  SelectionDistribution dist = selection_probabilities(member_losses, epsilon_bias);
  dist.label = cls;
  dist.members.assign(members.begin(), members.end());
  return dist;
}

std::vector<double> plain_selection_probabilities(std::span<const double> losses) {
  check_losses(losses);
  std::vector<double> neg(losses.size());
  std::transform(losses.begin(), losses.end(), neg.begin(), [](double l) { return -l; });
  return softmax(neg);
}

ProbabilityShift probability_shift(std::span<const double> losses, double epsilon_bias) {
  check_losses(losses);
  const std::size_t m = losses.size();
  std::vector<double> neg_plain(m), neg_processed(m);
  for (std::size_t i = 0; i < m; ++i) {
    neg_plain[i] = -losses[i];
    neg_processed[i] = -losses[i] * (losses[i] + epsilon_bias);
  }
  const auto log_p = log_softmax(neg_plain);
  const auto log_q = log_softmax(neg_processed);
  ProbabilityShift out;
  out.shift.resize(m);
  for (std::size_t i = 0; i < m; ++i) out.shift[i] = log_p[i] - log_q[i];
  out.beta = logsumexp(neg_plain) - logsumexp(neg_processed);
  return out;
}

RegroupEstimate regroup_median(double sample_loss, std::span<const double> selected_losses,
                               const RegroupParams& params, RngStream& rng) {
  params.validate();
  const std::size_t total = params.n * params.k;
  if (selected_losses.size() != total) {
    throw InvalidInput("regroup_median: expected " + std::to_string(total) + " selected losses, got " +
                       std::to_string(selected_losses.size()));
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  RegroupEstimate out;
  out.groups.groups.resize(params.n);
  out.groups.means.resize(params.n);
  std::vector<double> pool;
  pool.reserve(params.n + 1);
  for (std::size_t g = 0; g < params.n; ++g) {
    auto& members = out.groups.groups[g];
    members.assign(order.begin() + static_cast<std::ptrdiff_t>(g * params.k),
                   order.begin() + static_cast<std::ptrdiff_t>((g + 1) * params.k));
    double sum = 0.0;
    for (std::size_t idx : members) sum += selected_losses[idx];
    out.groups.means[g] = sum / static_cast<double>(params.k);
    pool.push_back(out.groups.means[g]);
  }
  pool.push_back(sample_loss);
  // n even: n + 1 values, unique middle.
  out.estimate = median_of(pool);
  return out;
}

double estimate_for_sample(std::size_t sample, const Dataset& dataset, const LossCache& cache,
                           const RegroupParams& params, RngStream rng, EstimatorVariant variant) {
  params.validate();
  if (cache.plain.size() != dataset.size()) throw InvalidInput("loss cache does not cover the dataset");
  if (sample >= dataset.size()) throw InvalidInput("sample index out of range");
  const double own = cache.plain[sample];
  const auto members = dataset.members(dataset.observed_labels()[sample]);

  std::vector<std::size_t> candidates;
  std::vector<double> log_weights;
  candidates.reserve(members.size());
  log_weights.reserve(members.size());
  for (std::size_t j : members) {
    if (j == sample) continue;
    const double l = cache.plain[j];
    candidates.push_back(j);
    log_weights.push_back(variant == EstimatorVariant::no_processing ? -l : -l * (l + params.epsilon_bias));
  }

  RegroupParams effective = params;
  effective.k = std::min(params.k, candidates.size() / params.n);
  if (effective.k == 0) return own;

  const auto drawn = sample_without_replacement_log(log_weights, effective.n * effective.k, rng);
  std::vector<double> selected(drawn.size());
  for (std::size_t j = 0; j < drawn.size(); ++j) selected[j] = cache.plain[candidates[drawn[j]]];

  if (variant == EstimatorVariant::mean_of_selected) {
    return std::accumulate(selected.begin(), selected.end(), 0.0) / static_cast<double>(selected.size());
  }
  return regroup_median(own, selected, effective, rng).estimate;
}

double propagate_estimate(const LossCache& cache, std::size_t sample, double fresh_loss) {
  return fresh_loss * cache.rml.at(sample) / std::max(cache.plain.at(sample), kLossFloor);
}

double correct_estimate(double estimate, double original_loss) { return std::min(estimate, original_loss); }

double batch_mean_estimate(const LossCache& cache, std::span<const std::size_t> batch,
                           std::span<const double> fresh_losses) {
  if (batch.size() != fresh_losses.size()) throw InvalidInput("batch/loss length mismatch");
  if (batch.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    sum += correct_estimate(propagate_estimate(cache, batch[b], fresh_losses[b]), fresh_losses[b]);
  }
  return sum / static_cast<double>(batch.size());
}

std::vector<double> batch_weights(const LossCache& cache, std::span<const std::size_t> batch,
                                  std::span<const double> fresh_losses) {
  if (batch.size() != fresh_losses.size()) throw InvalidInput("batch/loss length mismatch");
  std::vector<double> w(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double fresh = fresh_losses[b];
    const double est = correct_estimate(propagate_estimate(cache, batch[b], fresh), fresh);
    w[b] = est / std::max(fresh, kLossFloor);
  }
#ifndef NDEBUG
  if (!batch.empty()) {
    double weighted = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) weighted += w[b] * fresh_losses[b];
    weighted /= static_cast<double>(batch.size());
    assert(std::abs(weighted - batch_mean_estimate(cache, batch, fresh_losses)) <= 1e-9);
  }
#endif
  return w;
}

LossCache refresh_cache(const LossCache& cache, const Dataset& dataset, const ModelState& model,
                        const RegroupParams& params, const RngStream& rng, EstimatorVariant variant) {
  LossCache next;
  next.epoch = cache.epoch + 1;
  next.plain = per_sample_losses(model, dataset.features(), dataset.observed_labels());
  next.rml.resize(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double est = estimate_for_sample(i, dataset, next, params, rng.derive(next.epoch, i), variant);
    next.rml[i] = correct_estimate(est, next.plain[i]);
  }
  return next;
}

}  // namespace rmlab
