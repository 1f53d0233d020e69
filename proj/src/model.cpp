#include "rmlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "rmlab/binary_io.hpp"
#include "rmlab/error.hpp"

namespace rmlab {

std::string_view to_string(Architecture arch) {
  return arch == Architecture::linear ? "linear" : "mlp";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "linear") return Architecture::linear;
  if (name == "mlp") return Architecture::mlp;
  throw InvalidInput("unknown architecture '" + std::string(name) + "'");
}

ModelState ModelState::zeros(Architecture arch, std::size_t dim, std::size_t classes, std::size_t hidden) {
  if (dim == 0 || classes < 2) throw InvalidInput("model needs dim >= 1 and classes >= 2");
  ModelState m;
  m.architecture = arch;
  m.dim = dim;
  m.classes = classes;
  if (arch == Architecture::linear) {
    m.parameters = {Matrix(dim, classes), Matrix(1, classes)};
  } else {
    if (hidden == 0) throw InvalidInput("mlp needs hidden width >= 1");
    m.hidden = hidden;
    m.parameters = {Matrix(dim, hidden), Matrix(1, hidden), Matrix(hidden, classes), Matrix(1, classes)};
  }
  return m;
}

ModelState ModelState::initialized(Architecture arch, std::size_t dim, std::size_t classes,
                                   std::size_t hidden, RngStream rng) {
  ModelState m = zeros(arch, dim, classes, hidden);
  for (std::size_t p = 0; p < m.parameters.size(); p += 2) {
    Matrix& w = m.parameters[p];
    const double stdev = 1.0 / std::sqrt(static_cast<double>(w.rows()));
    for (double& v : w.data()) v = stdev * rng.normal();
  }
  return m;
}

bool ModelState::same_architecture(const ModelState& other) const noexcept {
  if (architecture != other.architecture || dim != other.dim || hidden != other.hidden ||
      classes != other.classes || parameters.size() != other.parameters.size()) {
    return false;
  }
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    if (!parameters[i].same_shape(other.parameters[i])) return false;
  }
  return true;
}

std::size_t ModelState::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : parameters) n += p.size();
  return n;
}

bool ModelState::all_finite() const noexcept {
  return std::all_of(parameters.begin(), parameters.end(), [](const Matrix& p) { return p.all_finite(); });
}

namespace {

// out = a * b + broadcast(bias)
Matrix affine(const Matrix& a, const Matrix& b, const Matrix& bias) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    std::copy(bias.data().begin(), bias.data().end(), o.begin());
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

// acc += a^T * b
void accumulate_at_b(Matrix& acc, const Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto brow = b.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto arow = acc.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) arow[j] += aik * brow[j];
    }
  }
}

void accumulate_column_sums(Matrix& acc, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) acc(0, j) += r[j];
  }
}

void check_input(const ModelState& model, const Matrix& features) {
  if (features.cols() != model.dim) {
    throw InvalidInput("feature dimension " + std::to_string(features.cols()) +
                       " does not match model dimension " + std::to_string(model.dim));
  }
}

struct Activations {
  Matrix hidden;  // empty for the linear model
  Matrix scores;
};

Activations run(const ModelState& model, const Matrix& x) {
  check_input(model, x);
  Activations act;
  const auto& p = model.parameters;
  if (model.architecture == Architecture::linear) {
    act.scores = affine(x, p[0], p[1]);
  } else {
    act.hidden = affine(x, p[0], p[1]);
    for (double& v : act.hidden.data()) v = std::tanh(v);
    act.scores = affine(act.hidden, p[2], p[3]);
  }
  return act;
}

// Row-wise log-softmax in place.
void log_softmax_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double lse = logsumexp(r);
    for (double& v : r) v -= lse;
  }
}

}  // namespace

Matrix logits(const ModelState& model, const Matrix& features) { return run(model, features).scores; }

Matrix forward(const ModelState& model, const Matrix& features) {
  Matrix probs = logits(model, features);
  log_softmax_rows(probs);
  for (double& v : probs.data()) v = std::exp(v);
  return probs;
}

std::vector<std::size_t> predict(const ModelState& model, const Matrix& features) {
  const Matrix s = logits(model, features);
  std::vector<std::size_t> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) out[i] = argmax(s.row(i));
  return out;
}

std::vector<double> per_sample_losses(const ModelState& model, const Matrix& features,
                                      std::span<const std::size_t> labels) {
  if (labels.size() != features.rows()) throw InvalidInput("label count does not match batch size");
  const Matrix probs = forward(model, features);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = cross_entropy(probs.row(i), labels[i]);
    if (!std::isfinite(out[i])) throw NumericalFailure("non-finite loss", i);
  }
  return out;
}

double accuracy(const ModelState& model, const Matrix& features, std::span<const std::size_t> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = predict(model, features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

LossAndGrad loss_and_grad(const ModelState& model, const Matrix& features,
                          std::span<const std::size_t> labels, std::span<const double> weights) {
  if (weights.size() != features.rows()) throw InvalidInput("weights must match the batch size");
  return loss_and_grad(model, features, labels, [&](std::span<const double>) {
    return std::vector<double>(weights.begin(), weights.end());
  });
}

LossAndGrad loss_and_grad(const ModelState& model, const Matrix& features,
                          std::span<const std::size_t> labels, const WeightFn& weight_fn) {
  const std::size_t batch = features.rows();
  if (labels.size() != batch) throw InvalidInput("labels must match the batch size");
  if (batch == 0) throw InvalidInput("empty batch");

  Activations act = run(model, features);
  Matrix& delta = act.scores;  // becomes dObjective/dScores
  log_softmax_rows(delta);

  LossAndGrad out;
  out.losses.resize(batch);
  std::vector<double> py(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= model.classes) throw InvalidInput("label out of range");
    auto r = delta.row(i);
    for (double& v : r) v = std::exp(v);
    py[i] = r[labels[i]];
    out.losses[i] = -std::log(py[i] + kLossFloor);
    if (!std::isfinite(out.losses[i])) throw NumericalFailure("non-finite loss", i);
  }

  const std::vector<double> weights = weight_fn(out.losses);
  if (weights.size() != batch) throw InvalidInput("weights must match the batch size");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("per-sample weights must be finite and >= 0");
  }

  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    auto r = delta.row(i);
    out.objective += weights[i] * out.losses[i] * inv_batch;
    // d/dz of -log(p_y + floor) is (p_y / (p_y + floor)) * (p - e_y).
    const double scale = weights[i] * inv_batch * py[i] / (py[i] + kLossFloor);
    r[labels[i]] -= 1.0;
    for (double& v : r) v *= scale;
  }

  const auto& p = model.parameters;
  out.gradients.reserve(p.size());
  for (const auto& m : p) out.gradients.emplace_back(m.rows(), m.cols());
  if (model.architecture == Architecture::linear) {
    accumulate_at_b(out.gradients[0], features, delta);
    accumulate_column_sums(out.gradients[1], delta);
  } else {
    accumulate_at_b(out.gradients[2], act.hidden, delta);
    accumulate_column_sums(out.gradients[3], delta);
    // Back through W2 and tanh.
    Matrix dh(batch, model.hidden);
    const Matrix& w2 = p[2];
    for (std::size_t i = 0; i < batch; ++i) {
      const auto d = delta.row(i);
      auto o = dh.row(i);
      for (std::size_t h = 0; h < model.hidden; ++h) {
        const auto wr = w2.row(h);
        double acc = 0.0;
        for (std::size_t k = 0; k < model.classes; ++k) acc += wr[k] * d[k];
        const double a = act.hidden(i, h);
        o[h] = acc * (1.0 - a * a);
      }
    }
    accumulate_at_b(out.gradients[0], features, dh);
    accumulate_column_sums(out.gradients[1], dh);
  }
  for (std::size_t g = 0; g < out.gradients.size(); ++g) {
    if (!out.gradients[g].all_finite()) throw NumericalFailure("non-finite gradient", 0);
  }
  return out;
}

OptimizerState OptimizerState::for_model(const OptimizerConfig& config, const ModelState& model) {
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw InvalidInput("momentum must lie in [0, 1)");
  if (!(config.lr_init > 0.0) || !(config.lr_min >= 0.0)) throw InvalidInput("learning rates must be positive");
  if (!(config.weight_decay >= 0.0)) throw InvalidInput("weight_decay must be >= 0");
  OptimizerState s;
  s.config = config;
  for (const auto& m : model.parameters) s.velocity.emplace_back(m.rows(), m.cols());
  return s;
}

double OptimizerState::learning_rate(std::size_t epoch) const noexcept {
  const auto& c = config;
  if (c.total_epochs == 0) return c.lr_init;
  const double t = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(c.total_epochs));
  return c.lr_min + 0.5 * (c.lr_init - c.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

void sgd_step(ModelState& model, OptimizerState& optimizer, const std::vector<Matrix>& gradients,
              std::size_t epoch) {
  if (gradients.size() != model.parameters.size() || optimizer.velocity.size() != model.parameters.size()) {
    throw InvalidInput("sgd_step: parameter/gradient/velocity counts differ");
  }
  const double lr = optimizer.learning_rate(epoch);
  const double mu = optimizer.config.momentum;
  const double wd = optimizer.config.weight_decay;
  for (std::size_t p = 0; p < gradients.size(); ++p) {
    auto& theta = model.parameters[p].data();
    auto& vel = optimizer.velocity[p].data();
    const auto& g = gradients[p].data();
    if (g.size() != theta.size() || vel.size() != theta.size()) {
      throw InvalidInput("sgd_step: shape mismatch in parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      vel[i] = mu * vel[i] + g[i] + wd * theta[i];
      theta[i] -= lr * vel[i];
    }
  }
}

void ema_update(ModelState& teacher, const ModelState& student, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("ema lambda must lie in [0, 1]");
  if (!teacher.same_architecture(student)) throw InvalidInput("ema_update: architecture mismatch");
  for (std::size_t p = 0; p < teacher.parameters.size(); ++p) {
    auto& t = teacher.parameters[p].data();
    const auto& s = student.parameters[p].data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - lambda) * s[i] + lambda * t[i];
  }
}

namespace {
constexpr char kCheckpointMagic[8] = {'R', 'M', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ModelState& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  binary::put_le<std::uint32_t>(out, kCheckpointVersion);
  binary::put_le<std::uint32_t>(out, model.architecture == Architecture::linear ? 0 : 1);
  binary::put_le<std::uint64_t>(out, model.dim);
  binary::put_le<std::uint64_t>(out, model.hidden);
  binary::put_le<std::uint64_t>(out, model.classes);
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters.size()));
  for (const auto& p : model.parameters) {
    binary::put_le<std::uint64_t>(out, p.rows());
    binary::put_le<std::uint64_t>(out, p.cols());
    for (double v : p.data()) binary::put_le<double>(out, v);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ModelState read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string name = path.string();
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw FormatError(name + ": not a checkpoint");
  }
  if (binary::get_le<std::uint32_t>(in, name) != kCheckpointVersion) {
    throw FormatError(name + ": unsupported checkpoint version");
  }
  const auto tag = binary::get_le<std::uint32_t>(in, name);
  if (tag > 1) throw FormatError(name + ": unknown architecture tag");
  const auto dim = binary::get_le<std::uint64_t>(in, name);
  const auto hidden = binary::get_le<std::uint64_t>(in, name);
  const auto classes = binary::get_le<std::uint64_t>(in, name);
  ModelState model = ModelState::zeros(tag == 0 ? Architecture::linear : Architecture::mlp, dim, classes, hidden);
  const auto count = binary::get_le<std::uint32_t>(in, name);
  if (count != model.parameters.size()) throw FormatError(name + ": parameter count mismatch");
  for (auto& p : model.parameters) {
    const auto rows = binary::get_le<std::uint64_t>(in, name);
    const auto cols = binary::get_le<std::uint64_t>(in, name);
    if (rows != p.rows() || cols != p.cols()) throw FormatError(name + ": parameter shape mismatch");
    for (double& v : p.data()) v = binary::get_le<double>(in, name);
  }
  return model;
}

}  // namespace rmlab
