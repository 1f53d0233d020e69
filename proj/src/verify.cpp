#include "rmlab/verify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "rmlab/error.hpp"
#include "rmlab/noise.hpp"
#include "rmlab/numerics.hpp"

namespace rmlab::verify {

Report check_prop1(std::size_t trials, std::size_t m, RngStream rng, double max_loss, double epsilon_bias,
                   double tolerance) {
  if (m < 2) throw InvalidInput("check_prop1 needs m >= 2");
  Report r;
  r.check = "prop1";
  r.trials = trials;
  r.bound = tolerance;
  double max_residual = 0.0;
  double min_beta = std::numeric_limits<double>::infinity();
  std::size_t sign_violations = 0;
  std::vector<double> losses(m), neg_plain(m), neg_processed(m);
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream s = rng.derive(t);
    for (double& l : losses) l = max_loss * s.uniform();
    const ProbabilityShift shift = probability_shift(losses, epsilon_bias);

    // Independent route to beta: the two normalizers.
    for (std::size_t i = 0; i < m; ++i) {
      neg_plain[i] = -losses[i];
      neg_processed[i] = -losses[i] * (losses[i] + epsilon_bias);
    }
    const double beta = logsumexp(neg_plain) - logsumexp(neg_processed);
    const bool degenerate = std::all_of(losses.begin(), losses.end(), [&](double l) { return l == losses[0]; });
    if (!degenerate) min_beta = std::min(min_beta, beta);
    for (std::size_t i = 0; i < m; ++i) {
      const double closed = losses[i] * (losses[i] + epsilon_bias - 1.0) - beta;
      max_residual = std::max(max_residual, std::abs(shift.shift[i] - closed));
      const double gap = losses[i] * (losses[i] + epsilon_bias - 1.0) - beta;
      if (std::abs(gap) > 1e-9 && (shift.shift[i] > 0.0) != (gap > 0.0)) ++sign_violations;
    }
  }
  r.statistic = max_residual;
  r.details = {{"min_beta", min_beta}, {"sign_violations", static_cast<double>(sign_violations)}};
  r.pass = max_residual < tolerance && sign_violations == 0 && (trials == 0 || min_beta > 0.0);
  return r;
}

double mom_estimate(std::span<const double> samples, std::size_t n, std::size_t k, RngStream& rng) {
  if (samples.size() != n * k + 1) throw InvalidInput("mom_estimate expects n*k + 1 samples");
  const RegroupParams params{n, k, 1.0};
  return regroup_median(samples[0], samples.subspan(1), params, rng).estimate;
}

double Population::mean() const noexcept {
  return (1.0 - contamination_weight) * base_mean + contamination_weight * contamination_mean;
}

double Population::variance() const noexcept {
  const double w = contamination_weight;
  const double second = (1.0 - w) * (base_stdev * base_stdev + base_mean * base_mean) +
                        w * (contamination_stdev * contamination_stdev + contamination_mean * contamination_mean);
  const double mu = mean();
  return second - mu * mu;
}

double Population::draw(RngStream& rng) const {
  if (contamination_weight > 0.0 && rng.uniform() < contamination_weight) {
    return contamination_mean + contamination_stdev * rng.normal();
  }
  return base_mean + base_stdev * rng.normal();
}

double prop2_bound(std::size_t n, std::size_t k, double variance, double epsilon_r, double* margin) {
  if (!(epsilon_r > 0.0)) throw InvalidInput("epsilon_r must be positive");
  const double c1 = 2.0 * static_cast<double>(n + 1);
  const double c2 = static_cast<double>(n + k) / (static_cast<double>(k) * static_cast<double>(n + 1));
  const double m = 0.5 - c2 * variance / (epsilon_r * epsilon_r);
  if (margin) *margin = m;
  return std::exp(-c1 * m * m);
}

Report check_prop2(const MomExperiment& e, RngStream rng) {
  RegroupParams{e.n, e.k, 1.0}.validate();
  Report r;
  r.check = "prop2";
  r.trials = e.trials;
  const double mu = e.population.mean();
  const double var = e.population.variance();
  double margin = 0.0;
  r.bound = prop2_bound(e.n, e.k, var, e.epsilon_r, &margin);

  std::size_t exceed = 0;
  std::vector<double> samples(e.n * e.k + 1);
  for (std::size_t t = 0; t < e.trials; ++t) {
    RngStream s = rng.derive(t);
    for (double& v : samples) v = e.population.draw(s);
    if (std::abs(mom_estimate(samples, e.n, e.k, s) - mu) > e.epsilon_r) ++exceed;
  }
  r.statistic = e.trials ? static_cast<double>(exceed) / static_cast<double>(e.trials) : 0.0;
  const double se = e.trials ? std::sqrt(r.bound * (1.0 - r.bound) / static_cast<double>(e.trials)) : 0.0;
  r.details = {{"population_mean", mu},     {"population_variance", var}, {"margin", margin},
               {"standard_error", se},      {"n", static_cast<double>(e.n)},
               {"k", static_cast<double>(e.k)}, {"epsilon_r", e.epsilon_r}};
  if (margin <= 0.0) {
    r.status = "vacuous";
    r.pass = true;
  } else {
    r.pass = r.statistic <= r.bound + 3.0 * se;
  }
  return r;
}

Report check_mom_robustness(std::span<const std::size_t> ns, std::span<const std::size_t> ks,
                            std::size_t base_draws, RngStream rng) {
  Report r;
  r.check = "mom";
  r.bound = 0.0;
  std::size_t cases = 0;
  std::size_t violations = 0;
  constexpr double kFar = 1e6;
  for (std::size_t n : ns) {
    for (std::size_t k : ks) {
      const RegroupParams params{n, k, 1.0};
      params.validate();
      const std::size_t inputs = n + 1;  // position n is the sample's own loss
      const std::size_t max_touched = (inputs + 1) / 2 - 1;
      for (std::size_t draw = 0; draw < base_draws; ++draw) {
        RngStream base = rng.derive(n * 1000 + k, draw);
        std::vector<double> selected(n * k);
        for (double& v : selected) v = 3.0 * base.uniform();
        const double own = 3.0 * base.uniform();
        const RngStream partition_rng = base.derive(99);
        RngStream probe = partition_rng;
        const GroupMeans groups = regroup_median(own, selected, params, probe).groups;

        for (std::uint32_t subset = 0; subset < (1u << inputs); ++subset) {
          const auto touched = static_cast<std::size_t>(std::popcount(subset));
          if (touched > max_touched) continue;
          // Every high/low assignment of the touched inputs.
          for (std::uint32_t signs = 0; signs < (1u << touched); ++signs) {
            std::vector<double> sel = selected;
            double own_loss = own;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            std::size_t bit = 0;
            for (std::size_t pos = 0; pos < inputs; ++pos) {
              const bool is_touched = (subset >> pos) & 1u;
              if (is_touched) {
                const double v = ((signs >> bit++) & 1u) ? kFar * (1.0 + static_cast<double>(pos)) : -kFar;
                if (pos == n) {
                  own_loss = v;
                } else {
                  for (std::size_t idx : groups.groups[pos]) sel[idx] = v;
                }
              } else {
                const double v = pos == n ? own : groups.means[pos];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
              }
            }
            RngStream replay = partition_rng;
            const double est = regroup_median(own_loss, sel, params, replay).estimate;
            ++cases;
            if (est < lo - 1e-12 || est > hi + 1e-12) ++violations;
          }
        }
      }
    }
  }
  r.trials = cases;
  r.statistic = static_cast<double>(violations);
  r.pass = violations == 0 && cases > 0;
  return r;
}

Report check_contamination(std::size_t n, std::size_t k, double base_mean, double base_stdev,
                           std::size_t corrupted_groups, double corruption_value, double epsilon_r,
                           std::size_t trials, double min_coverage, RngStream rng) {
  if (corrupted_groups * k > n * k) throw InvalidInput("more corrupted groups than groups");
  Report r;
  r.check = "contamination";
  r.trials = trials;
  r.bound = min_coverage;
  std::size_t within = 0;
  std::vector<double> samples(n * k + 1);
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream s = rng.derive(t);
    for (double& v : samples) v = base_mean + base_stdev * s.normal();
    for (std::size_t j = 0; j < corrupted_groups * k; ++j) samples[1 + j] = corruption_value;
    if (std::abs(mom_estimate(samples, n, k, s) - base_mean) <= epsilon_r) ++within;
  }
  r.statistic = trials ? static_cast<double>(within) / static_cast<double>(trials) : 0.0;
  r.pass = r.statistic >= min_coverage;
  return r;
}

CleanMass clean_selection_mass(const Dataset& dataset, std::span<const double> losses, double epsilon_bias) {
  if (losses.size() != dataset.size()) throw InvalidInput("loss vector does not cover the dataset");
  const auto mask = corruption_mask(dataset);
  CleanMass out;
  std::size_t classes = 0;
  for (std::size_t cls = 0; cls < dataset.num_classes(); ++cls) {
    const auto members = dataset.members(cls);
    if (members.empty()) continue;
    std::vector<double> l(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) l[j] = losses[members[j]];
    const auto plain = plain_selection_probabilities(l);
    const auto processed = selection_probabilities(l, epsilon_bias).probabilities;
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (mask[members[j]]) continue;
      out.plain += plain[j];
      out.processed += processed[j];
    }
    ++classes;
  }
  if (classes) {
    out.plain /= static_cast<double>(classes);
    out.processed /= static_cast<double>(classes);
  }
  return out;
}

Report check_cor1(const Dataset& dataset, const LossCache& cache, double epsilon_bias) {
  const auto mask = corruption_mask(dataset);
  Report r;
  r.check = "cor1";
  r.trials = 1;
  r.bound = 0.0;
  double clean = 0, noisy = 0;
  std::size_t nc = 0, nn = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (mask[i] ? noisy : clean) += cache.plain.at(i);
    ++(mask[i] ? nn : nc);
  }
  const double clean_mean = nc ? clean / static_cast<double>(nc) : 0.0;
  const double noisy_mean = nn ? noisy / static_cast<double>(nn) : 0.0;
  const CleanMass mass = clean_selection_mass(dataset, cache.plain, epsilon_bias);
  r.statistic = mass.processed - mass.plain;
  r.details = {{"clean_mass_plain", mass.plain},
               {"clean_mass_processed", mass.processed},
               {"clean_mean_loss", clean_mean},
               {"noisy_mean_loss", noisy_mean}};
  const bool premise = nn > 0 && nc > 0 && noisy_mean > clean_mean;
  if (!premise) {
    r.status = "premise_not_met";
    r.pass = true;
  } else {
    r.pass = mass.processed >= mass.plain;
  }
  return r;
}

}  // namespace rmlab::verify
