#include "fenlo/gaussian.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <thread>

namespace fenlo {

void GaussianSpec::validate() const {
  if (d < 1) throw std::domain_error("d must satisfy d >= 1");
  if (!(std::abs(rho) < 1.0)) throw std::domain_error("rho must satisfy |rho| < 1");
}

double ground_truth_mi(const GaussianSpec& spec) {
  spec.validate();
  return -(spec.d / 2.0) * std::log(1.0 - spec.rho * spec.rho);
}

void sample_pairs(const GaussianSpec& spec, int n, Rng& rng, Tensor& X, Tensor& Y) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("sample_pairs: n >= 1 required");
  std::vector<double> xs(static_cast<size_t>(n) * spec.d), ys(xs.size());
  double noise = std::sqrt(1.0 - spec.rho * spec.rho);
  for (size_t i = 0; i < xs.size(); ++i) {
    xs[i] = rng.normal();
    ys[i] = spec.rho * xs[i] + noise * rng.normal();
  }
  X = make_tensor({n, spec.d}, std::move(xs));
  Y = make_tensor({n, spec.d}, std::move(ys));
}

int worker_threads() {
  if (const char* env = std::getenv("FENLO_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<MetricRecord> run_sweep(const SweepOptions& opts) {
  if (opts.rho_grid.empty() || opts.kinds.empty()) {
    throw std::invalid_argument("run_sweep: rho grid and kind list must be nonempty");
  }
  struct Cell {
    double rho;
    EstimatorKind kind;
    int trial;
    uint64_t stream;
  };
  std::vector<Cell> cells;
  uint64_t stream = 0;
  for (double rho : opts.rho_grid)
    for (EstimatorKind kind : opts.kinds)
      for (int trial = 0; trial < opts.trials; ++trial) {
        cells.push_back({rho, kind, trial, stream++});
      }

  std::vector<MetricRecord> records(cells.size());
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      GaussianSpec spec{opts.d, cell.rho};
      MetricRecord rec;
      rec.kind = kind_name(cell.kind);
      rec.k = opts.batch_k;
      rec.rho = cell.rho;
      rec.d = opts.d;
      rec.trial = cell.trial;
      rec.truth = ground_truth_mi(spec);
      auto start = std::chrono::steady_clock::now();
      try {
        Rng cell_rng = Rng(opts.seed).split(cell.stream);
        CriticConfig cfg;
        cfg.kind = opts.critic;
        cfg.dx = spec.d;
        cfg.dy = spec.d;
        auto critic = make_critic(cfg, cell_rng);
        GaussianSampler sampler(spec);
        TrainOptions topts;
        topts.kind = cell.kind;
        topts.steps = opts.steps;
        topts.batch_k = opts.batch_k;
        topts.lr = opts.lr;
        topts.negatives = opts.negatives;
        topts.seed = cell_rng.split(1).seed();
        topts.truth = rec.truth;
        topts.log_interval = opts.steps;  // sweep cells record the final row only
        topts.eval_n = 0;
        topts.eval_n_final = opts.eval_n_final;
        TrainResult tr = train_estimator(sampler, *critic, topts);
        rec.step = opts.steps;
        rec.estimate = tr.final_estimate;
        rec.quantiles = tr.trace.back().quantiles;
      } catch (const NumericAbort&) {
        rec.failed = true;
        rec.step = 0;
        rec.estimate = std::numeric_limits<double>::quiet_NaN();
        rec.quantiles.fill(std::numeric_limits<double>::quiet_NaN());
      }
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start).count();
      records[i] = std::move(rec);
    }
  };
  int n_threads = std::min<int>(worker_threads(), static_cast<int>(cells.size()));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return records;
}

}  // namespace fenlo
