#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rmlab/data.hpp"
#include "rmlab/rml.hpp"
#include "rmlab/rng.hpp"

namespace rmlab::verify {

// status is "ok", "vacuous" (bound carries no information; not a failure) or
// "premise_not_met" (report only).
struct Report {
  std::string check;
  std::size_t trials = 0;
  double statistic = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string status = "ok";
  std::vector<std::pair<std::string, double>> details;
};

// Random loss vectors of length m with entries uniform in [0, max_loss]:
// checks log p - log p~ == l (l + eps - 1) - beta entrywise, beta > 0, and
// that the shift is positive exactly when l (l + eps - 1) > beta.
// statistic = max |residual|, bound = tolerance.
Report check_prop1(std::size_t trials, std::size_t m, RngStream rng, double max_loss = 30.0,
                   double epsilon_bias = 1.0, double tolerance = 1e-9);

// samples[0] is the sample's own loss, samples[1..] the n*k selected losses.
double mom_estimate(std::span<const double> samples, std::size_t n, std::size_t k, RngStream& rng);

// Two-component normal mixture for loss populations.
struct Population {
  double base_mean = 0.0;
  double base_stdev = 1.0;
  double contamination_weight = 0.0;
  double contamination_mean = 0.0;
  double contamination_stdev = 0.0;

  double mean() const noexcept;
  double variance() const noexcept;
  double draw(RngStream& rng) const;
};

struct MomExperiment {
  Population population;
  std::size_t n = 6;
  std::size_t k = 10;
  double epsilon_r = 1.0;
  std::size_t trials = 100000;
};

// Tail bound on the regroup median, exp(-C1 (1/2 - C2 s2 / e^2)^2), C1 = 2(n+1),
// C2 = (n+k)/(k(n+1)). Returns the margin 1/2 - C2 s2 / e^2 through `margin`.
double prop2_bound(std::size_t n, std::size_t k, double variance, double epsilon_r, double* margin = nullptr);

// Monte Carlo exceedance rate P(|estimate - mean| > epsilon_r) against the
// bound plus three binomial standard errors. statistic = empirical rate.
Report check_prop2(const MomExperiment& experiment, RngStream rng);

// Exhaustive: for each n in ns, k in ks, every set of at most n/2 of the n+1
// median inputs (group means and own loss) is driven to extreme values; the
// estimate must stay within [min, max] of the untouched inputs.
// statistic = number of violations.
Report check_mom_robustness(std::span<const std::size_t> ns, std::span<const std::size_t> ks,
                            std::size_t base_draws, RngStream rng);

// Monte Carlo: `corrupted_groups * k` of the n*k selected losses are replaced
// by `corruption_value`; statistic = fraction of trials whose estimate lands
// within epsilon_r of the base mean. Passes when that fraction >= min_coverage.
Report check_contamination(std::size_t n, std::size_t k, double base_mean, double base_stdev,
                           std::size_t corrupted_groups, double corruption_value, double epsilon_r,
                           std::size_t trials, double min_coverage, RngStream rng);

struct CleanMass {
  double plain = 0.0;      // mean over classes of clean mass under softmax(-l)
  double processed = 0.0;  // same under softmax(-l (l + eps))
};

CleanMass clean_selection_mass(const Dataset& dataset, std::span<const double> losses, double epsilon_bias = 1.0);

// Clean-sample selection mass under both laws. When noisy samples have the
// larger mean loss, processed mass must not fall below plain mass.
Report check_cor1(const Dataset& dataset, const LossCache& cache, double epsilon_bias = 1.0);

}  // namespace rmlab::verify
