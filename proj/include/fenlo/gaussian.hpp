#pragma once

#include <cstdint>
#include <vector>

#include "fenlo/estimators.hpp"
#include "fenlo/metrics.hpp"
#include "fenlo/rng.hpp"

namespace fenlo {

/// Jointly standard Gaussian pair (X, Y) in R^d x R^d with diagonal
/// cross-correlation rho per coordinate.
struct GaussianSpec {
  int d = 2;
  double rho = 0.5;

  void validate() const;
};

/// Closed-form ground truth: -(d/2) ln(1 - rho^2), in nats.
double ground_truth_mi(const GaussianSpec& spec);

/// n pairs: per coordinate x ~ N(0,1), y = rho x + sqrt(1-rho^2) eps.
void sample_pairs(const GaussianSpec& spec, int n, Rng& rng, Tensor& X, Tensor& Y);

class GaussianSampler : public Sampler {
 public:
  explicit GaussianSampler(GaussianSpec spec) : spec_(spec) { spec_.validate(); }
  void sample(int k, Rng& rng, Tensor& X, Tensor& Y) override {
    sample_pairs(spec_, k, rng, X, Y);
  }
  int dx() const override { return spec_.d; }
  int dy() const override { return spec_.d; }

 private:
  GaussianSpec spec_;
};

struct SweepOptions {
  std::vector<double> rho_grid = {0.0, 0.3, 0.5, 0.7, 0.9};
  int d = 2;
  std::vector<EstimatorKind> kinds = all_estimator_kinds();
  int steps = 5000;
  int batch_k = 128;
  int trials = 3;
  uint64_t seed = 0;
  double lr = 1e-4;
  CriticKind critic = CriticKind::bilinear;
  NegativeStrategy negatives = NegativeStrategy::full;
  int eval_n_final = 10000;
};

/// One record per (rho, kind, trial). Aborted trials are flagged rows, never
/// dropped. Cells run in parallel on FENLO_THREADS workers with split seeds.
std::vector<MetricRecord> run_sweep(const SweepOptions& opts);

/// Worker-pool size: FENLO_THREADS, or hardware concurrency when unset/0.
int worker_threads();

}  // namespace fenlo
