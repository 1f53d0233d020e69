#include "rmlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "rmlab/error.hpp"

namespace rmlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw InvalidInput("matrix data length " + std::to_string(data_.size()) +
                       " does not match shape " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
  }
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) throw InvalidInput("row index out of range");
    std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + ": non-finite input");
  }
}

}  // namespace

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("logsumexp: empty input");
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  require_finite(logits, "log_softmax");
  const double lse = logsumexp(logits);
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), [lse](double v) { return v - lse; });
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  require_finite(logits, "softmax");
  if (logits.empty()) throw InvalidInput("softmax: empty input");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("argmax: empty input");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw InvalidInput("cross_entropy: label " + std::to_string(label) + " out of range for " +
                       std::to_string(probs.size()) + " classes");
  }
  return -std::log(probs[label] + kLossFloor);
}

std::vector<std::size_t> sample_without_replacement_log(std::span<const double> log_weights,
                                                        std::size_t count, RngStream& rng) {
  std::vector<std::size_t> eligible;
  eligible.reserve(log_weights.size());
  std::vector<double> keys(log_weights.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    // One counter step per slot keeps draws aligned with indices.
    const double u = rng.uniform_open();
    if (std::isnan(log_weights[i])) throw InvalidInput("sample_without_replacement: NaN weight");
    if (!std::isfinite(log_weights[i])) {
      if (log_weights[i] > 0) throw InvalidInput("sample_without_replacement: infinite weight");
      continue;
    }
    keys[i] = log_weights[i] - std::log(-std::log(u));
    eligible.push_back(i);
  }
  if (eligible.empty()) throw InvalidInput("sample_without_replacement: all weights are zero");
  if (count > eligible.size()) {
    throw InvalidInput("sample_without_replacement: requested " + std::to_string(count) +
                       " draws from " + std::to_string(eligible.size()) + " positive weights");
  }
  auto by_key = [&keys](std::size_t a, std::size_t b) {
    return keys[a] > keys[b] || (keys[a] == keys[b] && a < b);
  };
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(count),
                    eligible.end(), by_key);
  eligible.resize(count);
  return eligible;
}

std::vector<std::size_t> sample_without_replacement(std::span<const double> weights,
                                                    std::size_t count, RngStream& rng) {
  std::vector<double> logs(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw InvalidInput("sample_without_replacement: weights must be finite and nonnegative");
    }
    logs[i] = weights[i] > 0.0 ? std::log(weights[i]) : -std::numeric_limits<double>::infinity();
  }
  return sample_without_replacement_log(logs, count, rng);
}

double median_of(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("median_of: empty list");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal_quantile: p must lie in (0, 1)");
  // Acklam's rational approximation followed by one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  if (std::isfinite(u)) x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double truncated_normal(double mean, double stdev, double low, double high, RngStream& rng) {
  if (!(low < high)) throw InvalidInput("truncated_normal: requires low < high");
  if (!std::isfinite(mean) || !(stdev >= 0.0) || !std::isfinite(stdev)) {
    throw InvalidInput("truncated_normal: mean must be finite and stdev nonnegative");
  }
  if (stdev == 0.0) return std::clamp(mean, low, high);

  double a = (low - mean) / stdev;
  double b = (high - mean) / stdev;
  const double mass = normal_cdf(b) - normal_cdf(a);
  if (mass >= 0.25) {
    for (;;) {
      const double z = rng.normal();
      if (z >= a && z <= b) return mean + stdev * z;
    }
  }
  // Thin interval or far tail: invert the CDF, working in the lower tail where
  // erfc keeps full relative precision.
  const bool reflect = a + b > 0.0;
  if (reflect) {
    const double t = a;
    a = -b;
    b = -t;
  }
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  double z;
  const double p = pa + rng.uniform_open() * (pb - pa);
  if (p <= 0.0 || pb <= 0.0) {
    z = b;  // both bounds beyond double range of the CDF
  } else {
    z = std::clamp(normal_quantile(std::min(p, 1.0 - 1e-16)), a, b);
  }
  if (reflect) z = -z;
  return std::clamp(mean + stdev * z, low, high);
}

}  // namespace rmlab
