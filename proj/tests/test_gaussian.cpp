#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "doctest.h"
#include "fenlo/gaussian.hpp"

using namespace fenlo;

TEST_CASE("ground truth: closed-form values") {
  CHECK(ground_truth_mi({1, 0.0}) == 0.0);
  CHECK(ground_truth_mi({2, 0.5}) == doctest::Approx(0.28768).epsilon(1e-4));
  CHECK(ground_truth_mi({10, 0.9}) == doctest::Approx(-5.0 * std::log(0.19)).epsilon(1e-12));
  CHECK(ground_truth_mi({10, 0.9}) == doctest::Approx(8.3037).epsilon(1e-4));
  // Sign of rho is irrelevant; d scales linearly.
  CHECK(ground_truth_mi({3, -0.7}) == doctest::Approx(ground_truth_mi({3, 0.7})).epsilon(1e-15));
  CHECK(ground_truth_mi({6, 0.4}) == doctest::Approx(2.0 * ground_truth_mi({3, 0.4})).epsilon(1e-12));
  // Strictly increasing in |rho|.
  double prev = -1.0;
  for (double rho : {0.0, 0.2, 0.5, 0.8, 0.95}) {
    double mi = ground_truth_mi({4, rho});
    CHECK(mi > prev);
    prev = mi;
  }
}

TEST_CASE("spec validation: |rho| < 1 and d >= 1") {
  GaussianSpec bad{2, 1.0};
  CHECK_THROWS_WITH_AS(bad.validate(), "rho must satisfy |rho| < 1", std::domain_error);
  GaussianSpec flat{0, 0.5};
  CHECK_THROWS_WITH_AS(flat.validate(), "d must satisfy d >= 1", std::domain_error);
  GaussianSpec neg{2, -1.5};
  CHECK_THROWS_AS(neg.validate(), std::domain_error);
}

TEST_CASE("sampler: deterministic per seed and correlated as configured") {
  GaussianSpec spec{2, 0.8};
  Tensor x1, y1, x2, y2;
  Rng a(42), b(42);
  sample_pairs(spec, 5000, a, x1, y1);
  sample_pairs(spec, 5000, b, x2, y2);
  CHECK(x1.values() == x2.values());
  CHECK(y1.values() == y2.values());
  CHECK(x1.shape == std::vector<int>{5000, 2});

  // Empirical per-coordinate correlation near rho.
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x1.values().size(); ++i) {
    sxy += x1.values()[i] * y1.values()[i];
    sxx += x1.values()[i] * x1.values()[i];
    syy += y1.values()[i] * y1.values()[i];
  }
  CHECK(sxy / std::sqrt(sxx * syy) == doctest::Approx(0.8).epsilon(0.03));

  Rng c(1);
  CHECK_THROWS_AS(sample_pairs(spec, 0, c, x1, y1), std::invalid_argument);
}

TEST_CASE("run_sweep: one record per (rho, kind, trial), in grid order") {
  SweepOptions opts;
  opts.rho_grid = {0.0, 0.5};
  opts.d = 1;
  opts.kinds = {EstimatorKind::FLO, EstimatorKind::InfoNCE};
  opts.steps = 5;
  opts.batch_k = 8;
  opts.trials = 2;
  opts.eval_n_final = 32;
  opts.seed = 7;
  opts.critic = CriticKind::bilinear;
  std::vector<MetricRecord> recs = run_sweep(opts);
  REQUIRE(recs.size() == 8);
  int i = 0;
  for (double rho : opts.rho_grid)
    for (EstimatorKind kind : opts.kinds)
      for (int trial = 0; trial < 2; ++trial) {
        CHECK(recs[i].rho == rho);
        CHECK(recs[i].kind == kind_name(kind));
        CHECK(recs[i].trial == trial);
        CHECK(recs[i].truth == doctest::Approx(ground_truth_mi({1, rho})).epsilon(1e-15));
        CHECK(!recs[i].failed);
        CHECK(std::isfinite(recs[i].estimate));
        ++i;
      }

  SweepOptions bad = opts;
  bad.rho_grid.clear();
  CHECK_THROWS_AS(run_sweep(bad), std::invalid_argument);
}

TEST_CASE("run_sweep: identical results across worker counts") {
  SweepOptions opts;
  opts.rho_grid = {0.3};
  opts.d = 1;
  opts.kinds = {EstimatorKind::FLO, EstimatorKind::DV};
  opts.steps = 5;
  opts.batch_k = 8;
  opts.trials = 2;
  opts.eval_n_final = 32;
  opts.seed = 9;
  opts.critic = CriticKind::bilinear;

  setenv("FENLO_THREADS", "1", 1);
  CHECK(worker_threads() == 1);
  std::vector<MetricRecord> serial = run_sweep(opts);
  setenv("FENLO_THREADS", "4", 1);
  CHECK(worker_threads() == 4);
  std::vector<MetricRecord> parallel = run_sweep(opts);
  unsetenv("FENLO_THREADS");
  CHECK(worker_threads() >= 1);

  REQUIRE(serial.size() == parallel.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].estimate == parallel[i].estimate);
    CHECK(serial[i].quantiles == parallel[i].quantiles);
    CHECK(serial[i].kind == parallel[i].kind);
  }
}

TEST_CASE("decile quantiles: interpolation and edge cases") {
  auto q = decile_quantiles({1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0});
  CHECK(q[0] == doctest::Approx(2.0).epsilon(1e-12));   // 10% of 0..10 -> index 1
  CHECK(q[4] == doctest::Approx(6.0).epsilon(1e-12));   // median
  CHECK(q[8] == doctest::Approx(10.0).epsilon(1e-12));  // 90%
  auto single = decile_quantiles({3.5});
  for (double v : single) CHECK(v == 3.5);
}
