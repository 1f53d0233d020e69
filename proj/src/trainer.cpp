#include "rmlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "rmlab/error.hpp"
#include "rmlab/noise.hpp"

namespace rmlab {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::ce: return "ce";
    case TrainMode::rml: return "rml";
    case TrainMode::rml_semi: return "rml_semi";
  }
  return "unknown";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "ce") return TrainMode::ce;
  if (name == "rml") return TrainMode::rml;
  if (name == "rml_semi") return TrainMode::rml_semi;
  throw InvalidInput("unknown training mode '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (batch_size == 0) throw InvalidInput("batch_size must be >= 1");
  if (common_epochs > total_epochs) throw InvalidInput("common_epochs must not exceed total_epochs");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("lambda must lie in [0, 1]");
  if (mode != TrainMode::ce) {
    if (warmup_epochs == 0) throw InvalidInput("warmup_epochs must be >= 1 for rml modes");
    regroup.validate();
  }
  if (mode == TrainMode::rml_semi && common_epochs < warmup_epochs) {
    throw InvalidInput("common_epochs must be >= warmup_epochs for rml_semi");
  }
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> shuffled(std::size_t n, RngStream rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<std::size_t> pick(std::span<const std::size_t> labels, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

class Loop {
 public:
  Loop(const Dataset& train, const Dataset& test, ModelState student, ModelState teacher,
       OptimizerState optimizer, const RunConfig& config)
      : train_(train),
        test_(test),
        student_(std::move(student)),
        teacher_(std::move(teacher)),
        opt_(std::move(optimizer)),
        cfg_(config),
        shuffle_rng_(config.seed, streams::kShuffle),
        regroup_rng_(config.seed, streams::kRegroup),
        mixup_rng_(config.seed, streams::kMixup) {
    cfg_.validate();
    if (!student_.same_architecture(teacher_)) throw InvalidInput("teacher and student architectures differ");
    if (train_.dim() != student_.dim || test_.dim() != student_.dim) {
      throw InvalidInput("dataset dimension does not match the model");
    }
    if (train_.has_true_labels()) mask_ = corruption_mask(train_);
  }

  TrainResult run() {
    for (std::size_t epoch = 0; epoch < cfg_.total_epochs; ++epoch) {
      double loss = 0.0;
      double labeled_fraction = kNaN;
      const bool rml_mode = cfg_.mode != TrainMode::ce;
      const bool semi_phase = cfg_.mode == TrainMode::rml_semi && epoch + 1 > cfg_.common_epochs;
      bool ran = false;
      if (semi_phase) {
        const Separation sep = separate(train_, student_, teacher_);
        labeled_fraction = static_cast<double>(sep.labeled.size()) / static_cast<double>(train_.size());
        if (!sep.labeled.empty()) {
          loss = semi_epoch(epoch, sep);
          ran = true;
        }
      }
      if (!ran) loss = common_epoch(epoch, rml_mode && epoch >= cfg_.warmup_epochs && !cache_.empty());
      if (rml_mode && epoch + 1 >= cfg_.warmup_epochs) {
        cache_ = refresh_cache(cache_, train_, student_, cfg_.regroup, regroup_rng_, cfg_.variant);
      }
      metrics_.push_back(evaluate(epoch, loss, labeled_fraction));
    }
    TrainResult out;
    out.student = std::move(student_);
    out.teacher = std::move(teacher_);
    out.metrics = std::move(metrics_);
    out.cache = std::move(cache_);
    return out;
  }

 private:
  void step(const LossAndGrad& lg, std::size_t epoch) {
    sgd_step(student_, opt_, lg.gradients, epoch);
    if (!student_.all_finite()) throw NumericalFailure("parameters became non-finite", 0);
    ema_update(teacher_, student_, cfg_.lambda);
  }

  double common_epoch(std::size_t epoch, bool use_rml) {
    const auto order = shuffled(train_.size(), shuffle_rng_.derive(epoch));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix x = gather_rows(train_.features(), idx);
      const auto y = pick(train_.observed_labels(), idx);
      LossAndGrad lg;
      try {
        if (use_rml) {
          lg = loss_and_grad(student_, x, y, [&](std::span<const double> fresh) {
            return batch_weights(cache_, idx, fresh);
          });
        } else {
          lg = loss_and_grad(student_, x, y, std::vector<double>(idx.size(), 1.0));
        }
      } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(batches) + ", sample " + std::to_string(idx[e.sample()]) + ")",
                               idx[e.sample()]);
      }
      step(lg, epoch);
      total += lg.objective;
      ++batches;
    }
    return batches ? total / static_cast<double>(batches) : 0.0;
  }

  double semi_epoch(std::size_t epoch, const Separation& sep) {
    const auto lab_order = shuffled(sep.labeled.size(), shuffle_rng_.derive(epoch, 1));
    const auto unl_order = shuffled(sep.unlabeled.size(), shuffle_rng_.derive(epoch, 2));
    std::size_t unl_cursor = 0;
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < lab_order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(lab_order.size(), start + cfg_.batch_size);
      std::vector<std::size_t> idx(end - start), uidx(end - start);
      for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = sep.labeled[lab_order[start + j]];
      if (sep.unlabeled.empty()) {
        uidx = idx;
      } else {
        for (std::size_t j = 0; j < uidx.size(); ++j) {
          uidx[j] = sep.unlabeled[unl_order[unl_cursor]];
          unl_cursor = (unl_cursor + 1) % unl_order.size();
        }
      }
      const Matrix x = gather_rows(train_.features(), idx);
      const Matrix xu = gather_rows(train_.features(), uidx);
      const auto y = pick(train_.observed_labels(), idx);
      RngStream gamma_rng = mixup_rng_.derive(epoch, batches);
      const MixupBatch mixed = mixup_batch(x, y, xu, gamma_rng);
      const LossAndGrad lg =
          loss_and_grad(student_, mixed.features, mixed.labels, std::vector<double>(idx.size(), 1.0));
      step(lg, epoch);
      total += lg.objective;
      ++batches;
    }
    return batches ? total / static_cast<double>(batches) : 0.0;
  }

  MetricsRow evaluate(std::size_t epoch, double loss, double labeled_fraction) const {
    MetricsRow row;
    row.epoch = epoch + 1;
    row.learning_rate = opt_.learning_rate(epoch);
    row.train_loss = loss;
    row.test_accuracy = accuracy(student_, test_.features(), test_.observed_labels());
    row.labeled_fraction = labeled_fraction;

    const std::vector<double> losses =
        cache_.epoch > 0 && cache_.plain.size() == train_.size() && last_refresh_is(epoch)
            ? cache_.plain
            : per_sample_losses(student_, train_.features(), train_.observed_labels());

    std::vector<double> prob(train_.size(), 0.0);
    for (std::size_t cls = 0; cls < train_.num_classes(); ++cls) {
      if (train_.members(cls).empty()) continue;
      const auto dist = selection_probabilities(train_, losses, cls, cfg_.regroup.epsilon_bias);
      for (std::size_t j = 0; j < dist.members.size(); ++j) prob[dist.members[j]] = dist.probabilities[j];
    }

    if (mask_.empty()) {
      row.clean_mean_loss = row.noisy_mean_loss = kNaN;
      row.clean_mean_selection_prob = row.noisy_mean_selection_prob = kNaN;
      return row;
    }
    double cl = 0, nl = 0, cp = 0, np = 0;
    std::size_t nc = 0, nn = 0;
    for (std::size_t i = 0; i < train_.size(); ++i) {
      if (mask_[i]) {
        nl += losses[i];
        np += prob[i];
        ++nn;
      } else {
        cl += losses[i];
        cp += prob[i];
        ++nc;
      }
    }
    row.clean_mean_loss = nc ? cl / static_cast<double>(nc) : kNaN;
    row.clean_mean_selection_prob = nc ? cp / static_cast<double>(nc) : kNaN;
    row.noisy_mean_loss = nn ? nl / static_cast<double>(nn) : kNaN;
    row.noisy_mean_selection_prob = nn ? np / static_cast<double>(nn) : kNaN;
    return row;
  }

  bool last_refresh_is(std::size_t epoch) const {
    return cfg_.mode != TrainMode::ce && epoch + 1 >= cfg_.warmup_epochs;
  }

  const Dataset& train_;
  const Dataset& test_;
  ModelState student_;
  ModelState teacher_;
  OptimizerState opt_;
  RunConfig cfg_;
  RngStream shuffle_rng_;
  RngStream regroup_rng_;
  RngStream mixup_rng_;
  LossCache cache_;
  std::vector<bool> mask_;
  std::vector<MetricsRow> metrics_;
};

}  // namespace

TrainResult train_ce(const Dataset& train, const Dataset& test, ModelState model, OptimizerState optimizer,
                     const RunConfig& config) {
  RunConfig cfg = config;
  cfg.mode = TrainMode::ce;
  ModelState teacher = model;
  return Loop(train, test, std::move(model), std::move(teacher), std::move(optimizer), cfg).run();
}

TrainResult train_rml(const Dataset& train, const Dataset& test, ModelState model, ModelState teacher,
                      OptimizerState optimizer, const RunConfig& config) {
  RunConfig cfg = config;
  cfg.mode = TrainMode::rml;
  return Loop(train, test, std::move(model), std::move(teacher), std::move(optimizer), cfg).run();
}

TrainResult train_rml_semi(const Dataset& train, const Dataset& test, ModelState model, ModelState teacher,
                           OptimizerState optimizer, const RunConfig& config) {
  RunConfig cfg = config;
  cfg.mode = TrainMode::rml_semi;
  return Loop(train, test, std::move(model), std::move(teacher), std::move(optimizer), cfg).run();
}

TrainResult train(const Dataset& train_set, const Dataset& test_set, ModelState model,
                  const OptimizerConfig& optimizer, const RunConfig& config) {
  OptimizerConfig oc = optimizer;
  oc.total_epochs = config.total_epochs;
  OptimizerState opt = OptimizerState::for_model(oc, model);
  ModelState teacher = model;
  switch (config.mode) {
    case TrainMode::ce: return train_ce(train_set, test_set, std::move(model), std::move(opt), config);
    case TrainMode::rml:
      return train_rml(train_set, test_set, std::move(model), std::move(teacher), std::move(opt), config);
    case TrainMode::rml_semi:
      return train_rml_semi(train_set, test_set, std::move(model), std::move(teacher), std::move(opt), config);
  }
  throw InvalidInput("unknown training mode");
}

Separation separate(const Dataset& dataset, const ModelState& student, const ModelState& teacher) {
  const auto ps = predict(student, dataset.features());
  const auto pt = predict(teacher, dataset.features());
  Separation sep;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t y = dataset.observed_labels()[i];
    (ps[i] == y && pt[i] == y ? sep.labeled : sep.unlabeled).push_back(i);
  }
  return sep;
}

MixupBatch mixup_with_gamma(const Matrix& labeled, std::span<const std::size_t> labels,
                            const Matrix& unlabeled, double raw_gamma) {
  if (!labeled.same_shape(unlabeled)) throw InvalidInput("mixup: labeled and unlabeled batches differ in shape");
  if (labels.size() != labeled.rows()) throw InvalidInput("mixup: label count does not match batch");
  if (!(raw_gamma >= 0.0 && raw_gamma <= 1.0)) throw InvalidInput("mixup: gamma must lie in [0, 1]");
  MixupBatch out;
  out.gamma = std::max(raw_gamma, 1.0 - raw_gamma);
  out.features = Matrix(labeled.rows(), labeled.cols());
  const auto& a = labeled.data();
  const auto& b = unlabeled.data();
  auto& m = out.features.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = out.gamma * a[i] + (1.0 - out.gamma) * b[i];
  out.labels.assign(labels.begin(), labels.end());
  return out;
}

MixupBatch mixup_batch(const Matrix& labeled, std::span<const std::size_t> labels, const Matrix& unlabeled,
                       RngStream& rng) {
  return mixup_with_gamma(labeled, labels, unlabeled, rng.uniform());
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,learning_rate,train_loss,test_accuracy,clean_mean_loss,noisy_mean_loss,"
         "clean_mean_selection_prob,noisy_mean_selection_prob,labeled_fraction\n";
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.epoch << ',' << num(r.learning_rate) << ',' << num(r.train_loss) << ',' << num(r.test_accuracy)
        << ',' << num(r.clean_mean_loss) << ',' << num(r.noisy_mean_loss) << ','
        << num(r.clean_mean_selection_prob) << ',' << num(r.noisy_mean_selection_prob) << ','
        << num(r.labeled_fraction) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace rmlab
