#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmlab/data.hpp"
#include "rmlab/error.hpp"
#include "rmlab/noise.hpp"
#include "rmlab/trainer.hpp"

using namespace rmlab;

namespace {

struct Split {
  Dataset train;
  Dataset test;
};

Split blobs(std::size_t c, std::size_t per_class, std::size_t dim, double sep, std::uint64_t seed,
            double noise = 0.0) {
  const Dataset full = make_blobs(c, per_class, dim, sep, RngStream(seed, streams::kData));
  TrainTestSplit s = split(full, 0.2, RngStream(seed, streams::kSplit));
  const Standardizer z = Standardizer::fit(s.train.features());
  Dataset train = s.train.with_features(z.apply(s.train.features()));
  Dataset test = s.test.with_features(z.apply(s.test.features()));
  if (noise > 0) train = inject_symmetric(train, noise, RngStream(seed, streams::kNoise));
  return {std::move(train), std::move(test)};
}

RunConfig run_config(TrainMode mode, std::size_t epochs, std::uint64_t seed = 1) {
  RunConfig rc;
  rc.mode = mode;
  rc.total_epochs = rc.common_epochs = epochs;
  rc.warmup_epochs = 3;
  rc.batch_size = 32;
  rc.seed = seed;
  return rc;
}

ModelState mlp(const Dataset& d, std::size_t hidden, std::uint64_t seed = 1) {
  return ModelState::initialized(Architecture::mlp, d.dim(), d.num_classes(), hidden, RngStream(seed, 4));
}

double max_abs_diff(const ModelState& a, const ModelState& b) {
  double m = 0;
  for (std::size_t p = 0; p < a.parameters.size(); ++p)
    for (std::size_t j = 0; j < a.parameters[p].size(); ++j)
      m = std::max(m, std::abs(a.parameters[p].data()[j] - b.parameters[p].data()[j]));
  return m;
}

}  // namespace

TEST_CASE("run config validation") {
  RunConfig rc = run_config(TrainMode::rml, 10);
  rc.warmup_epochs = 0;
  CHECK_THROWS_AS(rc.validate(), InvalidInput);
  rc = run_config(TrainMode::rml, 10);
  rc.common_epochs = 11;
  CHECK_THROWS_AS(rc.validate(), InvalidInput);
  rc = run_config(TrainMode::ce, 10);
  rc.batch_size = 0;
  CHECK_THROWS_AS(rc.validate(), InvalidInput);
  rc = run_config(TrainMode::rml_semi, 10);
  rc.common_epochs = 2;
  CHECK_THROWS_AS(rc.validate(), InvalidInput);
  CHECK(parse_train_mode("rml_semi") == TrainMode::rml_semi);
  CHECK_THROWS_AS(parse_train_mode("mixmatch"), InvalidInput);
}

TEST_CASE("ce: clean separable blobs, zero epochs, determinism") {
  const Split s = blobs(4, 100, 2, 8.0, 2);
  const ModelState init = mlp(s.train, 16);
  const TrainResult r = train(s.train, s.test, init, OptimizerConfig{}, run_config(TrainMode::ce, 60));
  CHECK(r.metrics.size() == 60);
  CHECK(r.metrics.back().test_accuracy >= 0.99);
  CHECK(r.cache.empty());

  const TrainResult none = train(s.train, s.test, init, OptimizerConfig{}, run_config(TrainMode::ce, 0));
  CHECK(none.student == init);
  CHECK(none.metrics.empty());

  const TrainResult again = train(s.train, s.test, init, OptimizerConfig{}, run_config(TrainMode::ce, 60));
  CHECK(again.student == r.student);
  for (std::size_t e = 0; e < r.metrics.size(); ++e) {
    CHECK(again.metrics[e].train_loss == r.metrics[e].train_loss);
    CHECK(again.metrics[e].test_accuracy == r.metrics[e].test_accuracy);
  }
}

TEST_CASE("metrics rows are well formed") {
  const Split s = blobs(3, 60, 4, 3.0, 3, 0.3);
  const TrainResult r =
      train(s.train, s.test, mlp(s.train, 16), OptimizerConfig{}, run_config(TrainMode::rml, 12));
  for (std::size_t e = 0; e < r.metrics.size(); ++e) {
    const MetricsRow& m = r.metrics[e];
    CHECK(m.epoch == e + 1);
    CHECK(m.test_accuracy >= 0.0);
    CHECK(m.test_accuracy <= 1.0);
    CHECK(m.train_loss >= 0.0);
    CHECK(m.clean_mean_loss >= 0.0);
    CHECK(m.noisy_mean_loss >= 0.0);
    CHECK(std::isnan(m.labeled_fraction));
  }
}

TEST_CASE("rml before warmup ends is plain ce") {
  const Split s = blobs(3, 60, 4, 3.0, 4, 0.3);
  const ModelState init = mlp(s.train, 16);
  RunConfig rc = run_config(TrainMode::rml, 6);
  rc.warmup_epochs = 7;
  const TrainResult a = train(s.train, s.test, init, OptimizerConfig{}, rc);
  const TrainResult b = train(s.train, s.test, init, OptimizerConfig{}, run_config(TrainMode::ce, 6));
  CHECK(a.student == b.student);
}

TEST_CASE("rml with every class too small to regroup degenerates to ce") {
  // A handful of members per class and no label noise, so no observed class
  // gains members: no sample has n = 6 peers, every estimate falls back to the
  // sample's own loss and every weight is 1 up to rounding.
  const Split s = blobs(3, 6, 2, 3.0, 5, 0.0);
  const ModelState init = mlp(s.train, 8);
  RunConfig rc = run_config(TrainMode::rml, 20);
  rc.regroup.k = 3;
  const TrainResult a = train(s.train, s.test, init, OptimizerConfig{}, rc);
  const TrainResult b = train(s.train, s.test, init, OptimizerConfig{}, run_config(TrainMode::ce, 20));
  CHECK(a.cache.rml == a.cache.plain);
  CHECK(max_abs_diff(a.student, b.student) < 1e-9);
}

TEST_CASE("lambda zero: teacher tracks the student") {
  const Split s = blobs(3, 40, 2, 3.0, 6, 0.2);
  RunConfig rc = run_config(TrainMode::rml, 8);
  rc.lambda = 0.0;
  const TrainResult r = train(s.train, s.test, mlp(s.train, 8), OptimizerConfig{}, rc);
  CHECK(r.teacher == r.student);
  rc.lambda = 1.0;
  const ModelState init = mlp(s.train, 8);
  const TrainResult frozen = train(s.train, s.test, init, OptimizerConfig{}, rc);
  CHECK(frozen.teacher == init);
}

TEST_CASE("rml separates noisy from clean losses") {
  const Split s = blobs(4, 150, 10, 2.0, 7, 0.4);
  RunConfig rc = run_config(TrainMode::rml, 30);
  rc.warmup_epochs = 5;
  const TrainResult r = train(s.train, s.test, mlp(s.train, 64), OptimizerConfig{}, rc);
  const MetricsRow& last = r.metrics.back();
  CHECK(last.noisy_mean_loss > last.clean_mean_loss);
  CHECK(last.clean_mean_selection_prob > last.noisy_mean_selection_prob);

  // Agreement separation keeps a purer set than the noisy training set.
  const Separation sep = separate(s.train, r.student, r.teacher);
  REQUIRE(!sep.labeled.empty());
  const auto mask = corruption_mask(s.train);
  double clean_labeled = 0;
  for (auto i : sep.labeled) clean_labeled += mask[i] ? 0 : 1;
  const double purity = clean_labeled / double(sep.labeled.size());
  CHECK(purity > 1.0 - corruption_rate(s.train));
}

TEST_CASE("separate: partition and extremes") {
  const Split s = blobs(3, 40, 2, 10.0, 8);
  const TrainResult r =
      train(s.train, s.test, mlp(s.train, 8), OptimizerConfig{}, run_config(TrainMode::ce, 40));
  REQUIRE(accuracy(r.student, s.train.features(), s.train.observed_labels()) == 1.0);
  const Separation all = separate(s.train, r.student, r.student);
  CHECK(all.labeled.size() == s.train.size());
  CHECK(all.unlabeled.empty());

  // Two models that always predict different fixed classes never agree.
  ModelState zero = ModelState::zeros(Architecture::linear, 2, 3);
  ModelState one = zero;
  zero.parameters[1](0, 0) = 100.0;
  one.parameters[1](0, 1) = 100.0;
  const Separation none = separate(s.train, zero, one);
  CHECK(none.labeled.empty());
  CHECK(none.unlabeled.size() == s.train.size());

  const Separation mixed = separate(s.train, r.student, zero);
  std::vector<int> seen(s.train.size(), 0);
  for (auto i : mixed.labeled) ++seen[i];
  for (auto i : mixed.unlabeled) ++seen[i];
  for (int v : seen) CHECK(v == 1);
}

TEST_CASE("mixup examples") {
  const Matrix x(2, 2, std::vector<double>{1, 2, 3, 4});
  const Matrix u(2, 2, std::vector<double>{5, 6, 7, 8});
  const std::vector<std::size_t> y{0, 1};
  const MixupBatch m = mixup_with_gamma(x, y, u, 0.3);
  CHECK(m.gamma == 0.7);
  CHECK(m.features(0, 0) == doctest::Approx(0.7 * 1 + 0.3 * 5));
  CHECK(m.labels == y);
  CHECK(mixup_with_gamma(x, y, u, 1.0).features == x);
  CHECK(mixup_with_gamma(x, y, u, 0.0).features == x);
  for (double g : {0.0, 0.2, 0.5, 0.9}) {
    const Matrix same = mixup_with_gamma(x, y, x, g).features;
    for (std::size_t i = 0; i < same.size(); ++i) CHECK(same.data()[i] == doctest::Approx(x.data()[i]));
  }
  CHECK_THROWS_AS(mixup_with_gamma(x, y, Matrix(2, 3), 0.5), InvalidInput);
  CHECK_THROWS_AS(mixup_with_gamma(x, y, u, 1.5), InvalidInput);

  RngStream r(3, 7);
  for (int t = 0; t < 10000; ++t) {
    const double g = mixup_batch(x, y, u, r).gamma;
    CHECK(g >= 0.5);
    CHECK(g <= 1.0);
  }
}

TEST_CASE("mixup with gamma one is plain weighted ce") {
  const Split s = blobs(3, 20, 3, 3.0, 9);
  const ModelState m = mlp(s.train, 8);
  const std::vector<double> w(s.train.size(), 1.0);
  const MixupBatch mixed = mixup_with_gamma(s.train.features(), s.train.observed_labels(),
                                            Matrix(s.train.size(), 3, 42.0), 1.0);
  const LossAndGrad a = loss_and_grad(m, mixed.features, mixed.labels, w);
  const LossAndGrad b = loss_and_grad(m, s.train.features(), s.train.observed_labels(), w);
  CHECK(a.objective == b.objective);
  CHECK(a.gradients == b.gradients);
}

TEST_CASE("semi: T2 = T1 is train_rml") {
  const Split s = blobs(3, 50, 4, 3.0, 10, 0.3);
  const ModelState init = mlp(s.train, 16);
  const TrainResult a = train(s.train, s.test, init, OptimizerConfig{}, run_config(TrainMode::rml, 10));
  const TrainResult b = train(s.train, s.test, init, OptimizerConfig{}, run_config(TrainMode::rml_semi, 10));
  CHECK(a.student == b.student);
  CHECK(a.teacher == b.teacher);
  CHECK(a.cache.rml == b.cache.rml);
}

TEST_CASE("semi: phase switch records labeled fraction and stays deterministic") {
  const Split s = blobs(4, 60, 6, 2.0, 11, 0.4);
  RunConfig rc = run_config(TrainMode::rml_semi, 16);
  rc.common_epochs = 10;
  rc.lambda = 0.9;
  const ModelState init = mlp(s.train, 32);
  const TrainResult r = train(s.train, s.test, init, OptimizerConfig{}, rc);
  for (std::size_t e = 0; e < r.metrics.size(); ++e) {
    if (e + 1 <= 10) {
      CHECK(std::isnan(r.metrics[e].labeled_fraction));
    } else {
      CHECK(r.metrics[e].labeled_fraction > 0.0);
      CHECK(r.metrics[e].labeled_fraction <= 1.0);
    }
  }
  CHECK(r.cache.epoch == 16 - rc.warmup_epochs + 1);
  const TrainResult again = train(s.train, s.test, init, OptimizerConfig{}, rc);
  CHECK(again.student == r.student);
  CHECK(again.teacher == r.teacher);
}

TEST_CASE("semi: empty labeled set falls back to the common body") {
  // Every sample is observed as class 1 while the model confidently predicts
  // class 0; a vanishing learning rate keeps it that way.
  const std::size_t n = 24;
  Matrix x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = double(i) / n;
  const Dataset train_set(x, Labels(n, 1), Labels(n, 1), 2);
  ModelState m = ModelState::zeros(Architecture::linear, 1, 2);
  m.parameters[1](0, 0) = 50.0;
  OptimizerConfig oc;
  oc.lr_init = 1e-9;
  oc.lr_min = 1e-9;
  RunConfig rc = run_config(TrainMode::rml_semi, 6);
  rc.common_epochs = 3;
  rc.warmup_epochs = 1;
  const TrainResult r = train(train_set, train_set, m, oc, rc);
  REQUIRE(r.metrics.size() == 6);
  for (std::size_t e = 3; e < 6; ++e) {
    CHECK(r.metrics[e].labeled_fraction == 0.0);
    CHECK(r.metrics[e].train_loss > 0.0);
  }
  CHECK_FALSE(r.student == m);
}

TEST_CASE("teacher lags a moving student") {
  const Split s = blobs(3, 40, 2, 3.0, 12, 0.2);
  RunConfig rc = run_config(TrainMode::rml, 5);
  rc.lambda = 0.7;
  const ModelState init = mlp(s.train, 8);
  // One-epoch increments so every student snapshot is visible.
  const TrainResult r = train(s.train, s.test, init, OptimizerConfig{}, rc);
  CHECK(r.teacher.all_finite());
  CHECK(r.teacher.same_architecture(r.student));
  CHECK_FALSE(r.teacher == r.student);
}

TEST_CASE("metrics csv is byte stable") {
  const Split s = blobs(3, 40, 2, 3.0, 13, 0.2);
  const auto dir = std::filesystem::temp_directory_path() / "rmlab_test_trainer";
  std::filesystem::create_directories(dir);
  auto dump = [&](const char* name) {
    const TrainResult r =
        train(s.train, s.test, mlp(s.train, 8), OptimizerConfig{}, run_config(TrainMode::rml_semi, 6));
    write_metrics_csv(dir / name, r.metrics);
    std::ifstream in(dir / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = dump("a.csv"), b = dump("b.csv");
  CHECK(a == b);
  CHECK(a.rfind("epoch,learning_rate,train_loss,test_accuracy,", 0) == 0);
  CHECK(a.find("nan") != std::string::npos);
}
