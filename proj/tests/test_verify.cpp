#include <doctest.h>

#include <cmath>

#include "rmlab/data.hpp"
#include "rmlab/error.hpp"
#include "rmlab/noise.hpp"
#include "rmlab/rml.hpp"
#include "rmlab/verify.hpp"

using namespace rmlab;
using namespace rmlab::verify;

namespace {

double detail(const Report& r, const std::string& key) {
  for (const auto& [k, v] : r.details)
    if (k == key) return v;
  FAIL("missing detail " << key);
  return 0;
}

}  // namespace

TEST_CASE("prop1 report") {
  const Report r = check_prop1(2000, 100, RngStream(1, 8));
  CHECK(r.check == "prop1");
  CHECK(r.trials == 2000);
  CHECK(r.pass);
  CHECK(r.statistic < 1e-9);
  CHECK(detail(r, "min_beta") > 0.0);
  CHECK(detail(r, "sign_violations") == 0.0);
  CHECK_THROWS_AS(check_prop1(10, 1, RngStream(1, 8)), InvalidInput);

  // Constant vectors: no randomness in the losses, so max_loss = 0 pins every
  // entry to zero.
  const Report flat = check_prop1(50, 10, RngStream(1, 8), 0.0);
  CHECK(flat.statistic == 0.0);
  CHECK(flat.pass);
}

TEST_CASE("mom_estimate delegates to regroup_median bit for bit") {
  RngStream a(4, 8), b(4, 8);
  std::vector<double> samples(61);
  RngStream fill(9, 9);
  for (int t = 0; t < 200; ++t) {
    for (double& v : samples) v = fill.normal();
    const double x = mom_estimate(samples, 6, 10, a);
    const double y =
        regroup_median(samples[0], std::span<const double>(samples).subspan(1), {6, 10, 1.0}, b).estimate;
    CHECK(x == y);
  }
  CHECK_THROWS_AS(mom_estimate(samples, 6, 9, a), InvalidInput);
}

TEST_CASE("population moments") {
  Population p;
  p.base_mean = 1.0;
  p.base_stdev = 2.0;
  CHECK(p.mean() == 1.0);
  CHECK(p.variance() == doctest::Approx(4.0));
  p.contamination_weight = 0.5;
  p.contamination_mean = 3.0;
  p.contamination_stdev = 0.0;
  CHECK(p.mean() == doctest::Approx(2.0));
  // Mixture: E[X^2] = 0.5 (4 + 1) + 0.5 * 9 = 7, var = 7 - 4.
  CHECK(p.variance() == doctest::Approx(3.0));
  RngStream r(1, 1);
  double s = 0, sq = 0;
  for (int i = 0; i < 200000; ++i) {
    const double x = p.draw(r);
    s += x;
    sq += x * x;
  }
  CHECK(s / 200000 == doctest::Approx(2.0).epsilon(0.01));
  CHECK(sq / 200000 - (s / 200000) * (s / 200000) == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("prop2 bound constants") {
  double margin = 0;
  const double b = prop2_bound(6, 10, 1.0, 2.0, &margin);
  const double c1 = 14.0, c2 = 16.0 / 70.0;
  CHECK(margin == doctest::Approx(0.5 - c2 / 4.0));
  CHECK(b == doctest::Approx(std::exp(-c1 * margin * margin)));
  CHECK(prop2_bound(6, 10, 0.0, 1.0) == doctest::Approx(std::exp(-c1 / 4.0)));
  CHECK_THROWS_AS(prop2_bound(6, 10, 1.0, 0.0), InvalidInput);
}

TEST_CASE("prop2 examples") {
  MomExperiment point;
  point.population.base_mean = 1.0;
  point.population.base_stdev = 0.0;
  point.trials = 10000;
  const Report pr = check_prop2(point, RngStream(2, 8));
  CHECK(pr.statistic == 0.0);
  CHECK(pr.bound == doctest::Approx(std::exp(-14.0 / 4.0)));
  CHECK(pr.pass);

  MomExperiment shifted;
  shifted.population.base_mean = 1.0;
  shifted.population.base_stdev = 1.0;
  shifted.epsilon_r = 2.0;
  shifted.trials = 100000;
  const Report sr = check_prop2(shifted, RngStream(3, 8));
  CHECK(sr.status == "ok");
  CHECK(sr.statistic <= sr.bound);
  CHECK(sr.pass);

  MomExperiment vacuous = shifted;
  vacuous.epsilon_r = 0.3;
  vacuous.trials = 1000;
  const Report vr = check_prop2(vacuous, RngStream(3, 8));
  CHECK(vr.status == "vacuous");
  CHECK(vr.pass);
}

TEST_CASE("prop2 exceedance does not grow with n") {
  std::vector<double> rates;
  for (std::size_t n : {2, 4, 6, 8}) {
    MomExperiment e;
    e.population.base_stdev = 1.0;
    e.n = n;
    e.k = 4;
    e.epsilon_r = 0.4;
    e.trials = 40000;
    rates.push_back(check_prop2(e, RngStream(n, 8)).statistic);
  }
  for (std::size_t i = 0; i + 1 < rates.size(); ++i) {
    const double se = std::sqrt(rates[i] * (1 - rates[i]) / 40000.0);
    INFO("n index " << i << ": " << rates[i] << " -> " << rates[i + 1]);
    CHECK(rates[i + 1] <= rates[i] + 3 * se);
  }
}

TEST_CASE("mom robustness is exhaustive and clean") {
  const std::size_t ns[] = {2, 4};
  const std::size_t ks[] = {1, 2};
  const Report r = check_mom_robustness(ns, ks, 3, RngStream(5, 8));
  // Cases per draw: sum over subsets of size <= n/2 of the n+1 inputs, times
  // 2^size sign patterns. n=2: 1 + 3*2 = 7. n=4: 1 + 5*2 + 10*4 = 51.
  CHECK(r.trials == 3 * 2 * (7 + 51));
  CHECK(r.statistic == 0.0);
  CHECK(r.pass);
}

TEST_CASE("contamination check") {
  const Report r = check_contamination(6, 1, 1.0, 0.1, 2, 1e6, 0.5, 5000, 0.99, RngStream(6, 8));
  CHECK(r.statistic >= 0.99);
  CHECK(r.pass);
  // Corrupting a majority breaks the estimator, and the check notices.
  const Report bad = check_contamination(6, 1, 1.0, 0.1, 4, 1e6, 0.5, 2000, 0.99, RngStream(6, 8));
  CHECK_FALSE(bad.pass);
}

TEST_CASE("cor1 on constructed caches") {
  // Two classes, ten members each, last three of each corrupted.
  Labels truth, observed;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 10; ++j) {
      truth.push_back(j < 7 ? c : 1 - c);
      observed.push_back(c);
    }
  const Dataset ds(Matrix(20, 1), observed, truth, 2);

  LossCache separated;
  for (std::size_t i = 0; i < 20; ++i) separated.plain.push_back(i % 10 < 7 ? 0.2 + 0.01 * double(i % 10) : 2.0 + 0.1 * double(i % 10));
  separated.rml = separated.plain;
  const CleanMass m = clean_selection_mass(ds, separated.plain);
  CHECK(m.processed > m.plain);
  const Report r = check_cor1(ds, separated);
  CHECK(r.status == "ok");
  CHECK(r.pass);
  CHECK(r.statistic > 0.0);

  LossCache flat;
  flat.plain.assign(20, 1.3);
  flat.rml = flat.plain;
  const CleanMass f = clean_selection_mass(ds, flat.plain);
  CHECK(f.processed == doctest::Approx(f.plain).epsilon(1e-14));
  CHECK(check_cor1(ds, flat).status == "premise_not_met");

  const Dataset blind(Matrix(2, 1), {0, 1}, std::nullopt, 2);
  LossCache two;
  two.plain = {0.1, 0.2};
  two.rml = two.plain;
  CHECK_THROWS_AS(check_cor1(blind, two), Unavailable);
}

TEST_CASE("cor1 direction on interleaved random caches") {
  // Report only per cache; on average the processed law favors clean members
  // when noisy losses are larger in distribution.
  const Dataset base = make_blobs(5, 40, 2, 3.0, RngStream(1, 1));
  double gain = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const Dataset ds = inject_symmetric(base, 0.4, RngStream(t, 3));
    const auto mask = corruption_mask(ds);
    RngStream r(t, 99);
    std::vector<double> l(ds.size());
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = mask[i] ? 2.0 * r.uniform() + 0.5 : 1.5 * r.uniform();
    const CleanMass m = clean_selection_mass(ds, l);
    gain += m.processed - m.plain;
  }
  CHECK(gain / 100 > 0.0);
}
