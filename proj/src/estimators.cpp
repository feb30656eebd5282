#include "fenlo/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace fenlo {

std::string kind_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::FLO: return "flo";
    case EstimatorKind::FDV: return "fdv";
    case EstimatorKind::InfoNCE: return "infonce";
    case EstimatorKind::NWJ: return "nwj";
    case EstimatorKind::TUBA: return "tuba";
    case EstimatorKind::DV: return "dv";
    case EstimatorKind::MINE: return "mine";
  }
  return "?";
}

EstimatorKind kind_from_name(const std::string& name) {
  for (EstimatorKind k : all_estimator_kinds()) {
    if (kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown estimator kind: " + name);
}

const std::vector<EstimatorKind>& all_estimator_kinds() {
  static const std::vector<EstimatorKind> kinds = {
      EstimatorKind::FLO, EstimatorKind::FDV, EstimatorKind::InfoNCE, EstimatorKind::NWJ,
      EstimatorKind::TUBA, EstimatorKind::DV, EstimatorKind::MINE};
  return kinds;
}

namespace {

Tensor diag_mask(int k) {
  std::vector<double> m(static_cast<size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i) m[static_cast<size_t>(i) * k + i] = 1.0;
  return make_tensor({k, k}, std::move(m));
}

Tensor offdiag_mask(int k) {
  std::vector<double> m(static_cast<size_t>(k) * k, 1.0);
  for (int i = 0; i < k; ++i) m[static_cast<size_t>(i) * k + i] = 0.0;
  return make_tensor({k, k}, std::move(m));
}

int check_square(const Tensor& G) {
  int k = G.rows();
  if (G.shape.size() != 2 || G.cols() != k) throw std::invalid_argument("score matrix must be square");
  if (k < 2) throw std::invalid_argument("K >= 2 required");
  return k;
}

Tensor diag_vec(const Tensor& G, int k) { return row_sum(mul(G, diag_mask(k))); }

// Off-diagonal max of the raw values (detached).
double offdiag_max(const Tensor& G, int k) {
  double best = -std::numeric_limits<double>::infinity();
  const auto& v = *G.data;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (i != j) best = std::max(best, v[static_cast<size_t>(i) * k + j]);
  return best;
}

// DV estimate from raw values, log-sum-exp stabilized.
double dv_value(const Tensor& G, int k) {
  const auto& v = *G.data;
  double m = offdiag_max(G, k);
  double s = 0.0, diag = 0.0;
  for (int i = 0; i < k; ++i) {
    diag += v[static_cast<size_t>(i) * k + i];
    for (int j = 0; j < k; ++j)
      if (i != j) s += std::exp(v[static_cast<size_t>(i) * k + j] - m);
  }
  return diag / k - (std::log(s / (static_cast<double>(k) * (k - 1))) + m);
}

void check_estimate(double estimate, const char* kind) {
  if (!std::isfinite(estimate)) {
    throw std::runtime_error(std::string("non-finite estimate in ") + kind);
  }
}

}  // namespace

LossBatch flo_loss(const Tensor& G, const Tensor& U) {
  int k = check_square(G);
  if (U.numel() != k) throw std::invalid_argument("flo_loss: U must have length K");
  Tensor gd = diag_vec(G, k);
  Tensor arg = sub(sub(G, gd), U);  // -U_i + G_ij - G_ii, column broadcasts
  Tensor e = mul(exp_op(clamp_exponent(arg)), offdiag_mask(k));
  Tensor f = add(U, scale(row_sum(e), 1.0 / (k - 1)));
  LossBatch out;
  out.loss = mean_all(f);
  out.estimate = 1.0 - out.loss.scalar();
  out.per_pair = *f.data;
  check_estimate(out.estimate, "flo_loss");
  return out;
}

LossBatch flo_loss_paired(const PairScores& scores) {
  int k = scores.g_pos.numel();
  if (scores.g_neg.numel() != k || scores.U.numel() != k) {
    throw std::invalid_argument("flo_loss_paired: length mismatch");
  }
  Tensor arg = sub(sub(scores.g_neg, scores.g_pos), scores.U);
  Tensor f = add(scores.U, exp_op(clamp_exponent(arg)));
  LossBatch out;
  out.loss = mean_all(f);
  out.estimate = 1.0 - out.loss.scalar();
  out.per_pair = *f.data;
  check_estimate(out.estimate, "flo_loss");
  return out;
}

LossBatch infonce_loss(const Tensor& G) {
  int k = check_square(G);
  Tensor m = row_max_detached(G);
  Tensor z = row_sum(exp_op(sub(G, m)));  // >= 1 since the row max is attained
  Tensor lse = add(ln_op(z), m);
  Tensor per = add_const(sub(diag_vec(G, k), lse), std::log(static_cast<double>(k)));
  Tensor est = mean_all(per);
  LossBatch out;
  out.loss = neg(est);
  out.estimate = est.scalar();
  out.per_pair = *per.data;
  for (double& v : out.per_pair) v = -v;
  check_estimate(out.estimate, "infonce_loss");
  return out;
}

LossBatch nwj_loss(const Tensor& G) {
  int k = check_square(G);
  Tensor mean_diag = scale(sum_all(mul(G, diag_mask(k))), 1.0 / k);
  Tensor e = mul(exp_op(clamp_exponent(add_const(G, -1.0))), offdiag_mask(k));
  Tensor neg_term = scale(sum_all(e), 1.0 / (static_cast<double>(k) * (k - 1)));
  Tensor est = sub(mean_diag, neg_term);
  LossBatch out;
  out.loss = neg(est);
  out.estimate = est.scalar();
  out.per_pair.assign(k, -out.estimate);
  check_estimate(out.estimate, "nwj_loss");
  return out;
}

LossBatch tuba_loss(const Tensor& G, const Tensor& baseline) {
  int k = check_square(G);
  if (baseline.numel() != k) throw std::invalid_argument("tuba_loss: baseline must have length K");
  Tensor pos = add_const(add(diag_vec(G, k), baseline), 1.0);  // g_ii + a_i + 1
  Tensor e = mul(exp_op(clamp_exponent(sub(G, baseline))), offdiag_mask(k));
  Tensor neg_term = scale(sum_all(e), 1.0 / (static_cast<double>(k) * (k - 1)));
  Tensor est = sub(mean_all(pos), neg_term);
  LossBatch out;
  out.loss = neg(est);
  out.estimate = est.scalar();
  out.per_pair.assign(k, -out.estimate);
  check_estimate(out.estimate, "tuba_loss");
  return out;
}

LossBatch dv_loss(const Tensor& G) {
  int k = check_square(G);
  double m = offdiag_max(G, k);
  Tensor dmask = diag_mask(k);
  Tensor omask = offdiag_mask(k);
  // Pin the diagonal at m before exponentiating so it cannot overflow; it is
  // masked back out of the sum.
  Tensor pinned = add(mul(G, omask), scale(dmask, m));
  Tensor e = mul(exp_op(add_const(pinned, -m)), omask);
  Tensor log_mean = add_const(ln_op(scale(sum_all(e), 1.0 / (static_cast<double>(k) * (k - 1)))), m);
  Tensor mean_diag = scale(sum_all(mul(G, dmask)), 1.0 / k);
  Tensor est = sub(mean_diag, log_mean);
  LossBatch out;
  out.loss = neg(est);
  out.estimate = est.scalar();
  out.per_pair.assign(k, -out.estimate);
  check_estimate(out.estimate, "dv_loss");
  return out;
}

LossBatch mine_loss(const Tensor& G, EmaState& ema) {
  if (!(ema.decay > 0.0 && ema.decay < 1.0)) {
    throw std::invalid_argument("mine_loss: decay must lie in (0,1)");
  }
  int k = check_square(G);
  Tensor omask = offdiag_mask(k);
  Tensor e = mul(exp_op(clamp_exponent(G)), omask);
  Tensor batch_mean_t = scale(sum_all(e), 1.0 / (static_cast<double>(k) * (k - 1)));
  double batch_mean = batch_mean_t.scalar();
  double used = ema.initialized ? ema.value : batch_mean;
  Tensor mean_diag = scale(sum_all(mul(G, diag_mask(k))), 1.0 / k);
  // EMA-normalized surrogate: correct gradient for the log-denominator.
  Tensor surrogate = sub(mean_diag, scale(batch_mean_t, 1.0 / used));
  LossBatch out;
  out.loss = neg(surrogate);
  out.estimate = mean_diag.scalar() - std::log(used);
  out.per_pair.assign(k, -out.estimate);
  check_estimate(out.estimate, "mine_loss");
  ema.value = ema.initialized ? ema.decay * ema.value + (1.0 - ema.decay) * batch_mean
                              : batch_mean;
  ema.initialized = true;
  return out;
}

LossBatch fdv_loss(const Tensor& G) {
  int k = check_square(G);
  double dv = dv_value(G, k);
  Tensor c = sub(G, diag_vec(G, k));  // c_ij = G_ij - G_ii
  Tensor s = row_sum(exp_op(clamp_exponent(c)));
  Tensor ratio = div(s, stop_gradient(s));  // forward value exactly 1 per row
  Tensor value = add_const(mean_all(ratio), dv - 1.0);
  LossBatch out;
  out.loss = neg(value);
  out.estimate = dv;  // reported value is the DV estimate, exactly
  out.per_pair = *ratio.data;
  check_estimate(out.estimate, "fdv_loss");
  return out;
}

EstimatorContext EstimatorContext::make(EstimatorKind kind, int dx, double ema_decay, Rng& rng) {
  EstimatorContext ctx;
  ctx.ema.decay = ema_decay;
  if (kind == EstimatorKind::TUBA) {
    ctx.baseline = std::make_unique<ParamStore>();
    Rng brng = rng.split(0x7ba5e11e);
    mlp_init(*ctx.baseline, "base", {dx, 128, 1}, brng);
  }
  return ctx;
}

LossBatch compute_loss(EstimatorKind kind, const Critic& critic, EmaState& ema,
                       Tape& tape, const Leaves& critic_leaves, const Leaves* baseline_leaves,
                       const Tensor& X, const Tensor& Y, NegativeStrategy strategy, Rng& rng) {
  if (strategy == NegativeStrategy::shuffle && kind == EstimatorKind::FLO) {
    PairScores ps = critic.score_pairs(tape, critic_leaves, X, Y,
                                       rng.mismatch_permutation(X.rows()));
    return flo_loss_paired(ps);
  }
  ScoreBatch sb = critic.score_matrix(tape, critic_leaves, X, Y);
  switch (kind) {
    case EstimatorKind::FLO: return flo_loss(sb.G, sb.U);
    case EstimatorKind::FDV: return fdv_loss(sb.G);
    case EstimatorKind::InfoNCE: return infonce_loss(sb.G);
    case EstimatorKind::NWJ: return nwj_loss(sb.G);
    case EstimatorKind::DV: return dv_loss(sb.G);
    case EstimatorKind::MINE: return mine_loss(sb.G, ema);
    case EstimatorKind::TUBA: {
      if (!baseline_leaves) throw std::invalid_argument("tuba requires a baseline head");
      Tensor a = mlp_forward(*baseline_leaves, "base", 2, X);
      return tuba_loss(sb.G, reshape(a, {X.rows()}));
    }
  }
  throw std::invalid_argument("compute_loss: unknown kind");
}

TrainResult train_estimator(Sampler& sampler, Critic& critic, const TrainOptions& opts) {
  if (opts.steps < 1) throw std::invalid_argument("train_estimator: steps >= 1 required");
  if (opts.batch_k < 2) throw std::invalid_argument("train_estimator: K >= 2 required");
  Rng rng(opts.seed);
  Rng batch_rng = rng.split(1);
  Rng eval_rng_base = rng.split(2);
  TrainResult result;
  result.context = EstimatorContext::make(opts.kind, sampler.dx(), opts.ema_decay, rng);
  AdamState critic_opt, baseline_opt;
  critic_opt.lr = opts.lr;
  baseline_opt.lr = opts.lr;

  auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };

  double last_estimate = 0.0;
  for (int step = 1; step <= opts.steps; ++step) {
    Tensor X, Y;
    sampler.sample(opts.batch_k, batch_rng, X, Y);
    try {
      Tape tape;
      Leaves leaves = critic.params.leaves(tape);
      std::optional<Leaves> base_leaves;
      if (result.context.baseline) base_leaves = result.context.baseline->leaves(tape);
      LossBatch lb = compute_loss(opts.kind, critic, result.context.ema, tape, leaves,
                                  base_leaves ? &*base_leaves : nullptr, X, Y,
                                  opts.negatives, batch_rng);
      tape.backward(lb.loss);
      critic.params.collect_grads(tape, leaves);
      adam_step(critic.params, critic_opt);
      if (result.context.baseline) {
        result.context.baseline->collect_grads(tape, *base_leaves);
        adam_step(*result.context.baseline, baseline_opt);
      }
      last_estimate = lb.estimate;
    } catch (const std::runtime_error& e) {
      throw NumericAbort(step, opts.kind,
                         "training aborted at step " + std::to_string(step) + " (" +
                             kind_name(opts.kind) + "): " + e.what());
    }

    bool last = (step == opts.steps);
    if (step % opts.log_interval == 0 || last) {
      MetricRecord rec;
      rec.step = step;
      rec.kind = kind_name(opts.kind);
      rec.k = opts.batch_k;
      rec.truth = opts.truth;
      int eval_n = last ? opts.eval_n_final : opts.eval_n;
      if (eval_n >= opts.batch_k) {
        Rng eval_rng = eval_rng_base.split(static_cast<uint64_t>(step));
        EvalResult ev = evaluate_estimate(sampler, critic, result.context, opts.kind,
                                          eval_n, opts.batch_k, eval_rng);
        rec.estimate = ev.mean;
        rec.quantiles = ev.quantiles;
      } else {
        rec.estimate = last_estimate;
        rec.quantiles.fill(last_estimate);
      }
      rec.wall_ms = elapsed_ms();
      result.trace.push_back(std::move(rec));
    }
  }
  result.final_estimate = result.trace.back().estimate;
  return result;
}

EvalResult evaluate_estimate(Sampler& sampler, const Critic& critic,
                             const EstimatorContext& ctx, EstimatorKind kind,
                             int n, int k, Rng& rng) {
  if (n < k) throw std::invalid_argument("evaluate_estimate: n >= K required");
  int batches = n / k;
  EvalResult out;
  out.per_batch.reserve(batches);
  EmaState ema = ctx.ema;  // frozen copy; evaluation never mutates the context
  for (int b = 0; b < batches; ++b) {
    Tensor X, Y;
    sampler.sample(k, rng, X, Y);
    Tape tape;
    Leaves leaves = critic.params.leaves(tape);
    std::optional<Leaves> base_leaves;
    if (ctx.baseline) base_leaves = ctx.baseline->leaves(tape);
    EmaState ema_batch = ema;
    LossBatch lb = compute_loss(kind, critic, ema_batch, tape, leaves,
                                base_leaves ? &*base_leaves : nullptr, X, Y,
                                NegativeStrategy::full, rng);
    out.per_batch.push_back(lb.estimate);
  }
  double s = 0.0;
  for (double v : out.per_batch) s += v;
  out.mean = s / batches;
  out.quantiles = decile_quantiles(out.per_batch);
  return out;
}

}  // namespace fenlo
