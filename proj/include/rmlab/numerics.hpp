#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rmlab/rng.hpp"

namespace rmlab {

inline constexpr double kLossFloor = 1e-12;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const noexcept;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Rows of `m` selected by `indices`, in order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

double logsumexp(std::span<const double> values);
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
std::size_t argmax(std::span<const double> values);

// -log(probs[label] + kLossFloor).
double cross_entropy(std::span<const double> probs, std::size_t label);

// Draws `count` distinct indices, successively and proportionally to
// `weights` (zero weights are never drawn). Implemented as a Gumbel top-k race,
// which has the same law as draw-and-renormalize.
std::vector<std::size_t> sample_without_replacement(std::span<const double> weights,
                                                    std::size_t count, RngStream& rng);

// Same law, parametrized by log-weights; every finite entry is eligible. Use
// this when weights would underflow (e.g. e^{-l(l+eps)} for large l).
std::vector<std::size_t> sample_without_replacement_log(std::span<const double> log_weights,
                                                        std::size_t count, RngStream& rng);

// Middle order statistic; mean of the two middle ones for even length.
double median_of(std::span<const double> values);

double normal_cdf(double x);
// Inverse of normal_cdf for p in (0, 1).
double normal_quantile(double p);

// Normal(mean, stdev) restricted to [low, high]. stdev == 0 yields the point
// mass at mean clamped into the interval.
double truncated_normal(double mean, double stdev, double low, double high, RngStream& rng);

}  // namespace rmlab
