#pragma once

// Small hand-rolled generators for property loops. Deliberately built on
// std::mt19937_64 so test inputs do not share a code path with the library RNG.

#include <cstdint>
#include <random>
#include <vector>

namespace gen {

class Source {
 public:
  explicit Source(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }

  std::vector<double> vec(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }

  // Loss vectors with a sprinkling of ties and zeros, which uniform draws miss.
  std::vector<double> losses(std::size_t n, double hi) {
    std::vector<double> v = vec(n, 0.0, hi);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = index(0, 9);
      if (r == 0) v[i] = 0.0;
      if (r == 1 && i > 0) v[i] = v[i - 1];
    }
    return v;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gen
