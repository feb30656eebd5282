#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fenlo/critics.hpp"
#include "fenlo/metrics.hpp"
#include "fenlo/rng.hpp"
#include "fenlo/tensor.hpp"

namespace fenlo {

enum class EstimatorKind { FLO, FDV, InfoNCE, NWJ, TUBA, DV, MINE };

std::string kind_name(EstimatorKind kind);
EstimatorKind kind_from_name(const std::string& name);
const std::vector<EstimatorKind>& all_estimator_kinds();

struct LossBatch {
  Tensor loss;                   // scalar, on tape when inputs are
  double estimate = 0.0;         // MI estimate in nats
  std::vector<double> per_pair;  // per-positive-pair loss values
};

/// Running exponential average of exp(g) over negatives (MINE denominator).
struct EmaState {
  double decay = 0.99;
  double value = 0.0;
  bool initialized = false;
};

LossBatch flo_loss(const Tensor& G, const Tensor& U);
LossBatch flo_loss_paired(const PairScores& scores);
LossBatch infonce_loss(const Tensor& G);
LossBatch nwj_loss(const Tensor& G);
LossBatch tuba_loss(const Tensor& G, const Tensor& baseline);
LossBatch dv_loss(const Tensor& G);
LossBatch mine_loss(const Tensor& G, EmaState& ema);
LossBatch fdv_loss(const Tensor& G);

/// Source of paired batches for estimator training/evaluation.
class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual void sample(int k, Rng& rng, Tensor& X, Tensor& Y) = 0;
  virtual int dx() const = 0;
  virtual int dy() const = 0;
};

enum class NegativeStrategy { full, shuffle };

/// Mutable per-estimator training state beyond the critic: MINE's EMA and
/// TUBA's x-only baseline head.
struct EstimatorContext {
  EmaState ema;
  std::unique_ptr<ParamStore> baseline;  // TUBA only

  static EstimatorContext make(EstimatorKind kind, int dx, double ema_decay, Rng& rng);
};

struct TrainOptions {
  EstimatorKind kind = EstimatorKind::FLO;
  int steps = 5000;
  int batch_k = 128;
  double lr = 1e-4;
  int log_interval = 500;
  int eval_n = 1280;        // samples per interval evaluation (0 = batch estimate only)
  int eval_n_final = 10000; // samples for the final-row evaluation
  NegativeStrategy negatives = NegativeStrategy::full;
  uint64_t seed = 0;
  double ema_decay = 0.99;
  double truth = 0.0;  // copied into records
};

/// Raised when a training step produces a non-finite loss.
struct NumericAbort : std::runtime_error {
  NumericAbort(int step_, EstimatorKind kind_, const std::string& what_)
      : std::runtime_error(what_), step(step_), kind(kind_) {}
  int step;
  EstimatorKind kind;
};

struct TrainResult {
  std::vector<MetricRecord> trace;
  double final_estimate = 0.0;
  EstimatorContext context;
};

TrainResult train_estimator(Sampler& sampler, Critic& critic, const TrainOptions& opts);

struct EvalResult {
  double mean = 0.0;
  std::array<double, 9> quantiles{};
  std::vector<double> per_batch;
};

/// Mean estimate over n samples split into batches of K, plus decile
/// quantiles of the per-batch estimates. Does not mutate the context.
EvalResult evaluate_estimate(Sampler& sampler, const Critic& critic,
                             const EstimatorContext& ctx, EstimatorKind kind,
                             int n, int k, Rng& rng);

/// One loss evaluation on an explicit batch (shared by train and eval paths).
LossBatch compute_loss(EstimatorKind kind, const Critic& critic, EmaState& ema,
                       Tape& tape, const Leaves& critic_leaves, const Leaves* baseline_leaves,
                       const Tensor& X, const Tensor& Y, NegativeStrategy strategy, Rng& rng);

}  // namespace fenlo
