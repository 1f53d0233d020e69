#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "rmlab/numerics.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

enum class Architecture { linear, mlp };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

// Softmax regression or a one-hidden-layer tanh MLP.
//
// Parameter layout:
//   linear: [W (d x c), b (1 x c)]
//   mlp:    [W1 (d x h), b1 (1 x h), W2 (h x c), b2 (1 x c)]
struct ModelState {
  Architecture architecture = Architecture::linear;
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  std::vector<Matrix> parameters;

  static ModelState zeros(Architecture arch, std::size_t dim, std::size_t classes, std::size_t hidden = 0);
  // Weights normal with stdev 1/sqrt(fan_in), biases zero.
  static ModelState initialized(Architecture arch, std::size_t dim, std::size_t classes,
                                std::size_t hidden, RngStream rng);

  bool same_architecture(const ModelState& other) const noexcept;
  std::size_t parameter_count() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

// Pre-softmax scores, batch x c.
Matrix logits(const ModelState& model, const Matrix& features);
// Row-wise class probabilities, batch x c.
Matrix forward(const ModelState& model, const Matrix& features);
std::vector<std::size_t> predict(const ModelState& model, const Matrix& features);
// Plain cross-entropy per sample.
std::vector<double> per_sample_losses(const ModelState& model, const Matrix& features,
                                      std::span<const std::size_t> labels);
double accuracy(const ModelState& model, const Matrix& features, std::span<const std::size_t> labels);

struct LossAndGrad {
  std::vector<double> losses;      // unweighted CE per sample
  std::vector<Matrix> gradients;   // of (1/B) sum_i w_i * loss_i
  double objective = 0.0;          // (1/B) sum_i w_i * loss_i
};

LossAndGrad loss_and_grad(const ModelState& model, const Matrix& features,
                          std::span<const std::size_t> labels, std::span<const double> weights);

// Same, with weights computed from this forward pass's per-sample losses.
using WeightFn = std::function<std::vector<double>(std::span<const double> losses)>;
LossAndGrad loss_and_grad(const ModelState& model, const Matrix& features,
                          std::span<const std::size_t> labels, const WeightFn& weight_fn);

struct OptimizerConfig {
  double lr_init = 0.1;
  double lr_min = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t total_epochs = 1;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<Matrix> velocity;

  static OptimizerState for_model(const OptimizerConfig& config, const ModelState& model);
  // Cosine annealing from lr_init (epoch 0) to lr_min (epoch total_epochs).
  double learning_rate(std::size_t epoch) const noexcept;
};

// v <- momentum * v + g + weight_decay * theta; theta <- theta - lr(epoch) * v.
void sgd_step(ModelState& model, OptimizerState& optimizer, const std::vector<Matrix>& gradients,
              std::size_t epoch);

// teacher <- (1 - lambda) * student + lambda * teacher.
void ema_update(ModelState& teacher, const ModelState& student, double lambda);

// Checkpoint container (little-endian):
//   char[8] "RMLCKPT\0", u32 version, u32 architecture tag (0 linear, 1 mlp),
//   u64 dim, u64 hidden, u64 classes, u32 parameter count,
//   per parameter: u64 rows, u64 cols, f64[rows*cols].
void write_checkpoint(const std::filesystem::path& path, const ModelState& model);
ModelState read_checkpoint(const std::filesystem::path& path);

}  // namespace rmlab
