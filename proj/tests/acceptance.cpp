// Acceptance suite: one PASS/FAIL line per criterion. Thresholds are fixed here
// and nowhere else.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "fd.hpp"
#include "gen.hpp"
#include "rmlab/data.hpp"
#include "rmlab/experiment.hpp"
#include "rmlab/model.hpp"
#include "rmlab/noise.hpp"
#include "rmlab/rml.hpp"
#include "rmlab/verify.hpp"

using namespace rmlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1 -----------------------------------------------------------------------

long double lse(const std::vector<long double>& v) {
  const long double hi = *std::max_element(v.begin(), v.end());
  long double s = 0;
  for (long double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

Outcome prop1_identity() {
  gen::Source g(101);
  double worst = 0.0, min_beta = INFINITY;
  for (int t = 0; t < 10000; ++t) {
    const std::vector<double> l = g.vec(100, 0.0, 30.0);
    const auto dist = selection_probabilities(l, 1.0);
    // Reference quantities in extended precision, not through the library.
    std::vector<long double> neg(l.size()), neg_proc(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) {
      neg[i] = -static_cast<long double>(l[i]);
      neg_proc[i] = -static_cast<long double>(l[i]) * (static_cast<long double>(l[i]) + 1.0L);
    }
    const long double lse_plain = lse(neg);
    const long double beta = lse_plain - lse(neg_proc);
    min_beta = std::min(min_beta, static_cast<double>(beta));
    const auto plain = plain_selection_probabilities(l);
    for (std::size_t i = 0; i < l.size(); ++i) {
      // log p from the library's plain law, log p~ from its processed law.
      const double log_p = std::log(plain[i]);
      const double lhs = log_p - dist.log_probabilities[i];
      const long double rhs = static_cast<long double>(l[i]) * l[i] - beta;
      if (plain[i] > 0.0) worst = std::max(worst, static_cast<double>(std::fabs(lhs - rhs)));
    }
    // Also the library's own shift helper.
    const ProbabilityShift s = probability_shift(l, 1.0);
    for (std::size_t i = 0; i < l.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::fabs(s.shift[i] - (static_cast<long double>(l[i]) * l[i] - beta))));
  }
  return {worst < 1e-9 && min_beta > 0.0, "max_residual=" + fmt("%.3g", worst) + " min_beta=" + fmt("%.6g", min_beta)};
}

// ---- 2 -----------------------------------------------------------------------

Outcome gradient_check() {
  gen::Source g(202);
  double worst_all = 0.0;
  std::string detail;
  for (Architecture arch : {Architecture::linear, Architecture::mlp}) {
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t d = g.index(1, 8), c = g.index(2, 6), h = g.index(1, 12), b = g.index(1, 16);
      ModelState m = ModelState::zeros(arch, d, c, arch == Architecture::mlp ? h : 0);
      for (auto& p : m.parameters)
        for (double& v : p.data()) v = g.uniform(-1.5, 1.5);
      Matrix x(b, d);
      for (double& v : x.data()) v = g.uniform(-2, 2);
      std::vector<std::size_t> y(b);
      for (auto& v : y) v = g.index(0, c - 1);
      const std::vector<double> w = g.vec(b, 0.0, 2.0);
      worst = std::max(worst, fd::max_relative_error(m, x, y, w));
    }
    detail += std::string(to_string(arch)) + "=" + fmt("%.3g", worst) + " ";
    worst_all = std::max(worst_all, worst);
  }
  return {worst_all < 1e-4, detail + "(max relative error)"};
}

// ---- 3 -----------------------------------------------------------------------

// Independent pass: corrupt up to n/2 of the n*k+1 raw inputs (each touches at
// most one median input), then bound the estimate by the untouched group means
// and own loss, read back from the partition the estimator reports.
std::size_t mom_violations_direct(std::size_t n, std::size_t k, std::size_t draws, gen::Source& g,
                                  std::size_t& cases) {
  std::size_t bad = 0;
  const std::size_t total = n * k + 1;
  for (std::size_t draw = 0; draw < draws; ++draw) {
    const std::vector<double> base = g.vec(total, 0.0, 5.0);
    // Enumerate subsets of size <= n/2 via bitmasks, then sign patterns.
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << total); ++mask) {
      const int touched = __builtin_popcountll(mask);
      if (touched > static_cast<int>(n / 2)) continue;
      for (std::uint64_t signs = 0; signs < (std::uint64_t{1} << touched); ++signs) {
        std::vector<double> v = base;
        int bit = 0;
        for (std::size_t i = 0; i < total; ++i) {
          if (!(mask >> i & 1)) continue;
          v[i] = (signs >> bit++ & 1) ? 1e9 : 0.0;
        }
        RngStream r(draw * 7919 + mask, signs);
        const RegroupEstimate e =
            regroup_median(v[0], std::span<const double>(v).subspan(1), {n, k, 1.0}, r);
        std::vector<double> clean;
        if (!(mask & 1)) clean.push_back(v[0]);
        for (std::size_t gi = 0; gi < n; ++gi) {
          bool hit = false;
          for (std::size_t idx : e.groups.groups[gi]) hit = hit || (mask >> (idx + 1) & 1);
          if (!hit) clean.push_back(e.groups.means[gi]);
        }
        ++cases;
        const auto [lo, hi] = std::minmax_element(clean.begin(), clean.end());
        if (clean.empty() || e.estimate < *lo || e.estimate > *hi) ++bad;
      }
    }
  }
  return bad;
}

Outcome mom_robustness() {
  const std::size_t ns[] = {2, 4, 6};
  const std::size_t ks[] = {1, 2, 3};
  const verify::Report r = verify::check_mom_robustness(ns, ks, 10, RngStream(303, 1));
  gen::Source g(303);
  std::size_t direct = 0, cases = 0;
  for (std::size_t n : ns)
    for (std::size_t k : ks) direct += mom_violations_direct(n, k, n * k + 1 > 16 ? 1 : 3, g, cases);
  return {r.statistic == 0.0 && direct == 0,
          "median-input cases=" + std::to_string(r.trials) + " violations=" + fmt("%.0f", r.statistic) +
              "; raw-input cases=" + std::to_string(cases) + " violations=" + std::to_string(direct)};
}

// ---- 4 -----------------------------------------------------------------------

Outcome prop2_bound() {
  verify::MomExperiment e;
  e.population.base_mean = 1.0;
  e.population.base_stdev = 1.0;
  e.n = 6;
  e.k = 10;
  e.epsilon_r = 1.0;
  e.trials = 100000;
  // Constants written out: C1 = 2(n+1), C2 = (n+k)/(k(n+1)).
  const double c1 = 14.0, c2 = 16.0 / 70.0;
  const double margin = 0.5 - c2 * 1.0 / (e.epsilon_r * e.epsilon_r);
  const double bound = std::exp(-c1 * margin * margin);
  const verify::Report r = verify::check_prop2(e, RngStream(404, 1));
  const double se = std::sqrt(r.statistic * (1 - r.statistic) / double(e.trials));
  const bool ok = margin > 0.1 && std::abs(r.bound - bound) < 1e-12 && r.statistic <= bound + 3 * se;
  return {ok, "epsilon_r=1 margin=" + fmt("%.4f", margin) + " rate=" + fmt("%.5f", r.statistic) +
                  " bound=" + fmt("%.5f", bound) + " se=" + fmt("%.2g", se)};
}

// ---- 5 -----------------------------------------------------------------------

Outcome noise_rates() {
  const std::size_t c = 10;
  const Dataset clean = make_blobs(c, 10000, 2, 3.0, RngStream(505, 1));
  bool ok = true;
  std::string detail;
  auto realized = [&](const Dataset& ds) {
    std::size_t flips = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) flips += ds.observed_labels()[i] != ds.true_labels()[i];
    return double(flips) / double(ds.size());
  };
  for (double rate : {0.2, 0.5}) {
    const double got = realized(inject(clean, {NoiseKind::symmetric, rate}, 505));
    ok = ok && std::abs(got - rate) <= 0.01;
    detail += "symmetric" + fmt("%.1f", rate) + "=" + fmt("%.4f", got) + " ";
  }
  const Dataset pf = inject(clean, {NoiseKind::pairflip, 0.45}, 505);
  const double got = realized(pf);
  std::size_t off_band = 0;
  for (std::size_t i = 0; i < pf.size(); ++i) {
    const std::size_t t = pf.true_labels()[i], o = pf.observed_labels()[i];
    if (o != t && o != (t + 1) % c) ++off_band;
  }
  ok = ok && std::abs(got - 0.45) <= 0.01 && off_band == 0;
  detail += "pairflip0.45=" + fmt("%.4f", got) + " off_band=" + std::to_string(off_band);
  return {ok, detail};
}

// ---- 6 / 7 -------------------------------------------------------------------

// Scaled stand-in for the image benchmarks: 10 well-mixed Gaussian classes in
// 20 dimensions with an MLP wide enough to memorize flipped labels under CE.
ExperimentConfig scaled_setting(TrainMode mode, EstimatorVariant variant, std::uint64_t seed) {
  ExperimentConfig c;
  c.dataset.source = "blobs";
  c.dataset.num_classes = 10;
  c.dataset.per_class = 500;
  c.dataset.dim = 20;
  c.dataset.separation = 1.5;
  c.has_dataset = true;
  c.noise = NoiseSpec{NoiseKind::symmetric, 0.4, streams::kNoise};
  c.model.architecture = Architecture::mlp;
  c.model.hidden = 256;
  c.optimizer.lr_init = 0.1;
  c.run.mode = mode;
  c.run.variant = variant;
  c.run.total_epochs = 100;
  c.run.common_epochs = mode == TrainMode::rml_semi ? 13 : 100;  // T2/T1 = 50/400
  c.run.warmup_epochs = 5;
  c.run.batch_size = 128;
  c.run.regroup = {6, 16, 1.0};  // k = 4% of the ~400 training samples per class
  c.run.lambda = 0.999;
  c.run.seed = seed;
  c.has_run = true;
  return c;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct SeparationRun {
  std::optional<TrainResult> result;
  std::optional<PreparedData> data;
};

Outcome fig2_separation(SeparationRun& run) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = scaled_setting(TrainMode::rml, EstimatorVariant::full, 1);
  run.data = prepare_data(cfg, 1);
  run.result = run_training(cfg, *run.data, 1);
  const double seconds = since(t0);

  const Dataset& tr = run.data->train;
  const auto losses = per_sample_losses(run.result->student, tr.features(), tr.observed_labels());
  double clean_sum = 0, noisy_sum = 0, p_clean = 0, q_clean = 0;
  std::size_t n_clean = 0, n_noisy = 0;
  for (std::size_t cls = 0; cls < tr.num_classes(); ++cls) {
    const auto members = tr.members(cls);
    std::vector<double> a(members.size()), b(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) {
      const double l = losses[members[j]];
      a[j] = -l;
      b[j] = -l * (l + 1.0);
    }
    const double la = *std::max_element(a.begin(), a.end()), lb = *std::max_element(b.begin(), b.end());
    double za = 0, zb = 0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      za += std::exp(a[j] - la);
      zb += std::exp(b[j] - lb);
    }
    for (std::size_t j = 0; j < members.size(); ++j) {
      const std::size_t i = members[j];
      if (tr.observed_labels()[i] == tr.true_labels()[i]) {
        clean_sum += losses[i];
        ++n_clean;
        p_clean += std::exp(a[j] - la) / za;
        q_clean += std::exp(b[j] - lb) / zb;
      } else {
        noisy_sum += losses[i];
        ++n_noisy;
      }
    }
  }
  const double ratio = (noisy_sum / double(n_noisy)) / (clean_sum / double(n_clean));
  p_clean /= double(n_clean);
  q_clean /= double(n_clean);
  const bool ok = ratio >= 2.0 && q_clean > p_clean && seconds < 300.0;
  return {ok, "noisy/clean loss=" + fmt("%.3f", ratio) + " clean prob processed=" + fmt("%.6g", q_clean) +
                  " plain=" + fmt("%.6g", p_clean) + " time=" + fmt("%.1f", seconds) + "s"};
}

Outcome method_ordering(const SeparationRun& seed1) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Arm {
    const char* name;
    TrainMode mode;
    EstimatorVariant variant;
    double sum = 0;
  };
  Arm arms[] = {{"ce", TrainMode::ce, EstimatorVariant::full},
                {"rml", TrainMode::rml, EstimatorVariant::full},
                {"rml_semi", TrainMode::rml_semi, EstimatorVariant::full},
                {"no_processing", TrainMode::rml, EstimatorVariant::no_processing},
                {"no_median", TrainMode::rml, EstimatorVariant::mean_of_selected}};
  const int seeds = 5;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const PreparedData data = seed == 1 && seed1.data ? *seed1.data : prepare_data(scaled_setting(TrainMode::ce, EstimatorVariant::full, seed), seed);
    for (Arm& a : arms) {
      double acc;
      if (seed == 1 && seed1.result && a.mode == TrainMode::rml && a.variant == EstimatorVariant::full) {
        acc = seed1.result->metrics.back().test_accuracy;
      } else {
        acc = run_training(scaled_setting(a.mode, a.variant, seed), data, seed).metrics.back().test_accuracy;
      }
      a.sum += acc;
      std::printf("  [7] seed %llu %-13s %.4f\n", static_cast<unsigned long long>(seed), a.name, acc);
      std::fflush(stdout);
    }
  }
  double mean[5];
  std::string detail;
  for (int i = 0; i < 5; ++i) {
    mean[i] = arms[i].sum / seeds;
    detail += std::string(arms[i].name) + "=" + fmt("%.4f", mean[i]) + " ";
  }
  const double seconds = since(t0);
  const double ce = mean[0], rml = mean[1], semi = mean[2], np = mean[3], nm = mean[4];
  const bool ok = semi >= rml && rml >= ce && rml >= np && rml >= nm && rml - ce >= 0.03 && seconds < 1800.0;
  return {ok, detail + "time=" + fmt("%.0f", seconds) + "s"};
}

// ---- 8 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "rmlab_acceptance_determinism";
  fs::remove_all(root);
  bool ok = true;
  std::string detail;
  for (TrainMode mode : {TrainMode::ce, TrainMode::rml, TrainMode::rml_semi}) {
    ExperimentConfig c;
    c.dataset.source = "blobs";
    c.dataset.num_classes = 4;
    c.dataset.per_class = 100;
    c.dataset.dim = 6;
    c.dataset.separation = 2.0;
    c.has_dataset = true;
    c.noise = NoiseSpec{NoiseKind::symmetric, 0.4, streams::kNoise};
    c.model.hidden = 32;
    c.run.mode = mode;
    c.run.total_epochs = 15;
    c.run.common_epochs = 8;
    c.run.warmup_epochs = 2;
    c.run.batch_size = 32;
    c.run.regroup = {6, 2, 1.0};
    c.run.seed = 808;
    c.has_run = true;
    const std::string name = "metrics_" + std::string(to_string(mode)) + ".csv";
    c.out = root / "a";
    cmd_train(c);
    c.out = root / "b";
    cmd_train(c);
    const std::string a = slurp(root / "a" / name), b = slurp(root / "b" / name);
    const bool same = !a.empty() && a == b;
    ok = ok && same;
    detail += std::string(to_string(mode)) + (same ? "=identical " : "=DIFFERENT ");
  }
  fs::remove_all(root);
  return {ok, detail};
}

// ---- 9 -----------------------------------------------------------------------

Outcome idx_round_trip() {
  const fs::path root = fs::temp_directory_path() / "rmlab_acceptance_idx";
  fs::remove_all(root);
  fs::create_directories(root);
  gen::Source g(909);
  const std::size_t count = 64, rows = 28, cols = 28;
  std::vector<std::uint8_t> pixels(count * rows * cols), labels(count);
  for (auto& p : pixels) p = static_cast<std::uint8_t>(g.index(0, 255));
  for (auto& l : labels) l = static_cast<std::uint8_t>(g.index(0, 9));
  pixels[0] = 0;
  pixels[1] = 255;
  write_idx_images(root / "img", count, rows, cols, pixels);
  write_idx_labels(root / "lbl", labels);

  const Dataset ds = read_idx(root / "img", root / "lbl");
  std::size_t mismatches = 0;
  std::vector<std::uint8_t> back_pixels(pixels.size()), back_labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < rows * cols; ++j) {
      const double v = ds.features()(i, j);
      if (v != pixels[i * rows * cols + j] / 255.0) ++mismatches;
      back_pixels[i * rows * cols + j] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    if (ds.observed_labels()[i] != labels[i]) ++mismatches;
    back_labels[i] = static_cast<std::uint8_t>(ds.observed_labels()[i]);
  }
  write_idx_images(root / "img2", count, rows, cols, back_pixels);
  write_idx_labels(root / "lbl2", back_labels);
  const bool bytes_equal =
      slurp(root / "img") == slurp(root / "img2") && slurp(root / "lbl") == slurp(root / "lbl2");
  fs::remove_all(root);
  return {mismatches == 0 && back_pixels == pixels && bytes_equal,
          "value mismatches=" + std::to_string(mismatches) + (bytes_equal ? " files identical" : " files differ")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  SeparationRun separation;
  const Criterion criteria[] = {
      {1, "prop1 identity", 10, prop1_identity},
      {2, "gradient check", 30, gradient_check},
      {3, "median-of-means robustness", 10, mom_robustness},
      {4, "prop2 concentration bound", 60, prop2_bound},
      {5, "noise injection rates", 10, noise_rates},
      {6, "loss separation", 300, [&] { return fig2_separation(separation); }},
      {7, "method ordering", 1800, [&] { return method_ordering(separation); }},
      {8, "determinism", 600, determinism},
      {9, "idx round trip", 1, idx_round_trip},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = since(t0);
    const bool ok = o.pass && seconds < c.budget_seconds;
    failures += ok ? 0 : 1;
    std::printf("%s %d %s: %s [%.2fs, budget %.0fs]\n", ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds, c.budget_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
