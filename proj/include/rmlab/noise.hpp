#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rmlab/data.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

enum class NoiseKind { symmetric, pairflip, instance_dependent };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;
  std::uint64_t stream = streams::kNoise;

  // Throws InvalidInput on rate outside [0, 1) or pairflip rate >= 0.5.
  void validate() const;
};

// Every injector relabels from the input's observed labels, keeps features and
// true labels untouched, and draws sample i's decision from a stream keyed by
// i alone.

// Flip with probability `rate` to one of the other c-1 classes, uniformly.
Dataset inject_symmetric(const Dataset& dataset, double rate, RngStream rng);

// Flip with probability `rate` from y to (y + 1) mod c.
Dataset inject_pairflip(const Dataset& dataset, double rate, RngStream rng);

// Per-sample flip rate q_i ~ N(rate, flip_stdev^2) truncated to [0, 1]; flip
// target drawn from softmax(x_i . W) with the source class masked out, where
// W (d x c) has standard-normal entries drawn once per invocation.
Dataset inject_instance_dependent(const Dataset& dataset, double rate, RngStream rng,
                                  double flip_stdev = 0.1);

Dataset inject(const Dataset& dataset, const NoiseSpec& spec, std::uint64_t seed);

// mask[i] == (observed[i] != true[i]). Throws Unavailable without ground truth.
std::vector<bool> corruption_mask(const Dataset& dataset);
double corruption_rate(const Dataset& dataset);

}  // namespace rmlab
