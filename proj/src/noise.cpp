#include "rmlab/noise.hpp"

#include <cmath>
#include <limits>

#include "rmlab/error.hpp"
#include "rmlab/numerics.hpp"

namespace rmlab {

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::pairflip: return "pairflip";
    case NoiseKind::instance_dependent: return "instance_dependent";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "symmetric") return NoiseKind::symmetric;
  if (name == "pairflip") return NoiseKind::pairflip;
  if (name == "instance_dependent" || name == "instance") return NoiseKind::instance_dependent;
  throw InvalidInput("unknown noise kind '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidInput("noise rate must lie in [0, 1)");
  if (kind == NoiseKind::pairflip && rate >= 0.5) {
    throw InvalidInput("pairflip noise rate must be < 0.5");
  }
}

namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidInput("noise rate must lie in [0, 1)");
}

}  // namespace

Dataset inject_symmetric(const Dataset& dataset, double rate, RngStream rng) {
  check_rate(rate);
  const std::size_t c = dataset.num_classes();
  if (c < 2) throw InvalidInput("symmetric noise needs at least 2 classes");
  Labels labels = dataset.observed_labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    RngStream s = rng.derive(i);
    if (s.uniform() < rate) {
      // Uniform over the c-1 classes other than the current one.
      const std::size_t offset = 1 + s.below(c - 1);
      labels[i] = (labels[i] + offset) % c;
    }
  }
  return dataset.with_observed_labels(std::move(labels));
}

Dataset inject_pairflip(const Dataset& dataset, double rate, RngStream rng) {
  check_rate(rate);
  if (rate >= 0.5) throw InvalidInput("pairflip noise rate must be < 0.5");
  const std::size_t c = dataset.num_classes();
  if (c < 2) throw InvalidInput("pairflip noise needs at least 2 classes");
  Labels labels = dataset.observed_labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    RngStream s = rng.derive(i);
    if (s.uniform() < rate) labels[i] = (labels[i] + 1) % c;
  }
  return dataset.with_observed_labels(std::move(labels));
}

Dataset inject_instance_dependent(const Dataset& dataset, double rate, RngStream rng,
                                  double flip_stdev) {
  check_rate(rate);
  const std::size_t c = dataset.num_classes();
  const std::size_t d = dataset.dim();
  if (c < 2) throw InvalidInput("instance-dependent noise needs at least 2 classes");

  RngStream proj_rng = rng.derive(~std::uint64_t{0});
  Matrix projection(d, c);
  for (double& v : projection.data()) v = proj_rng.normal();

  const Matrix& x = dataset.features();
  Labels labels = dataset.observed_labels();
  std::vector<double> scores(c);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    RngStream s = rng.derive(i);
    const double q = truncated_normal(rate, flip_stdev, 0.0, 1.0, s);
    if (!(s.uniform() < q)) continue;

    const std::size_t source = labels[i];
    for (std::size_t k = 0; k < c; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += x(i, j) * projection(j, k);
      scores[k] = acc;
    }
    scores[source] = -std::numeric_limits<double>::infinity();
    // Categorical draw over the unmasked softmax via one Gumbel race.
    labels[i] = sample_without_replacement_log(scores, 1, s).front();
  }
  return dataset.with_observed_labels(std::move(labels));
}

Dataset inject(const Dataset& dataset, const NoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  RngStream rng(seed, spec.stream);
  switch (spec.kind) {
    case NoiseKind::symmetric: return inject_symmetric(dataset, spec.rate, rng);
    case NoiseKind::pairflip: return inject_pairflip(dataset, spec.rate, rng);
    case NoiseKind::instance_dependent: return inject_instance_dependent(dataset, spec.rate, rng);
  }
  throw InvalidInput("unknown noise kind");
}

std::vector<bool> corruption_mask(const Dataset& dataset) {
  const Labels& truth = dataset.true_labels();
  const Labels& obs = dataset.observed_labels();
  std::vector<bool> mask(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) mask[i] = obs[i] != truth[i];
  return mask;
}

double corruption_rate(const Dataset& dataset) {
  const auto mask = corruption_mask(dataset);
  if (mask.empty()) return 0.0;
  std::size_t flipped = 0;
  for (bool b : mask) flipped += b ? 1 : 0;
  return static_cast<double>(flipped) / static_cast<double>(mask.size());
}

}  // namespace rmlab
