// Acceptance gate: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Heavier end-to-end runs live here rather than in the unit
// suite.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "fenlo/csv.hpp"
#include "fenlo/discrete.hpp"
#include "fenlo/estimators.hpp"
#include "fenlo/gaussian.hpp"
#include "fenlo/grad_check.hpp"
#include "fenlo/meta.hpp"

using namespace fenlo;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s criterion-%d (%s): %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch()).count();
}

Table random_table(int nx, int ny, double scale, Rng& rng) {
  Table t(nx, ny);
  for (double& v : t.v) v = scale * rng.normal();
  return t;
}

Table optimal_u_for(const DiscreteJoint& joint, const Table& g) {
  Table u(g.nx, g.ny);
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      double s = 0.0;
      for (int yp = 0; yp < g.ny; ++yp) {
        s += joint.py()[yp] * std::exp(g.at(x, yp) - g.at(x, y));
      }
      u.at(x, y) = std::log(s);
    }
  return u;
}

DiscreteJoint joint_2x2() {
  Table p(2, 2);
  p.at(0, 0) = 0.4;
  p.at(0, 1) = 0.1;
  p.at(1, 0) = 0.1;
  p.at(1, 1) = 0.4;
  return DiscreteJoint(p);
}

// --------------------------------------------------------------------------

void criterion_1_tightness() {
  double t0 = now_s();
  double worst = 0.0;
  auto probe = [&](const DiscreteJoint& joint) {
    OptimalCritics oc = optimal_critics(joint);
    double mi = exact_mi(joint);
    worst = std::max(worst, std::abs(exact_flo(joint, oc.g, oc.u) - mi));
    worst = std::max(worst, std::abs(exact_uba(joint, oc.g).value - mi));
  };
  probe(joint_2x2());
  Rng rng(101);
  for (int t = 0; t < 20; ++t) probe(DiscreteJoint::random(3, 4, rng));
  double secs = now_s() - t0;
  report(1, "tightness at the optimal critics", worst < 1e-9 && secs < 1.0,
         "max deviation " + format_double(worst) + " over 21 joints in " +
             format_double(secs) + " s");
}

void criterion_2_ordering() {
  double t0 = now_s();
  double worst_gap = 0.0;
  bool ok = true;
  Rng rng(103);
  for (int j = 0; j < 100; ++j) {
    DiscreteJoint joint = DiscreteJoint::random(3, 4, rng);
    double mi = exact_mi(joint);
    for (int c = 0; c < 20; ++c) {
      Table g = random_table(3, 4, 1.5, rng);
      Table u = random_table(3, 4, 1.0, rng);
      double flo = exact_flo(joint, g, u);
      double uba = exact_uba(joint, g).value;
      if (flo > uba + 1e-12 || uba > mi + 1e-12) ok = false;
      worst_gap = std::max({worst_gap, flo - uba, uba - mi});
    }
  }
  double secs = now_s() - t0;
  report(2, "bound ordering FLO <= UBA <= MI", ok && secs < 5.0,
         "2000 critic/joint pairs, worst violation " + format_double(worst_gap) + " in " +
             format_double(secs) + " s");
}

void criterion_3_alignment() {
  double worst = 0.0;
  Rng rng(107);
  for (int t = 0; t < 50; ++t) {
    DiscreteJoint joint = DiscreteJoint::random(3, 4, rng);
    Table g = random_table(3, 4, 1.0, rng);
    FloGrads fg = exact_flo_grad(joint, g, optimal_u_for(joint, g));
    UbaResult ub = exact_uba(joint, g);
    for (size_t i = 0; i < fg.dg.v.size(); ++i) {
      worst = std::max(worst, std::abs(fg.dg.v[i] - ub.grad.v[i]));
    }
  }
  report(3, "gradient alignment of FLO and UBA at u*(g)", worst < 1e-9,
         "max |dFLO/dg - dUBA/dg| = " + format_double(worst));
}

TrainResult train_gaussian(int d, double rho, int k, EstimatorKind kind, uint64_t seed) {
  GaussianSpec spec{d, rho};
  Rng rng(seed);
  CriticConfig cc;
  cc.kind = CriticKind::joint;
  cc.dx = d;
  cc.dy = d;
  Rng crng = rng.split(0);
  auto critic = make_critic(cc, crng);
  GaussianSampler sampler(spec);
  TrainOptions t;
  t.kind = kind;
  t.steps = 5000;
  t.batch_k = k;
  t.lr = 1e-4;
  t.negatives = NegativeStrategy::shuffle;
  t.log_interval = 5000;
  t.eval_n = 0;
  t.eval_n_final = 10000;
  t.seed = rng.split(1).seed();
  t.truth = ground_truth_mi(spec);
  return train_estimator(sampler, *critic, t);
}

void criterion_4_gaussian() {
  double t0 = now_s();
  TrainResult low = train_gaussian(2, 0.5, 128, EstimatorKind::FLO, 0);
  double truth = ground_truth_mi({2, 0.5});
  double err = std::abs(low.final_estimate - truth);
  double secs = now_s() - t0;
  bool ok_low = err <= 0.05 && secs < 300.0;

  // High-MI regime: FLO is not ceilinged at ln K, unlike InfoNCE.
  TrainResult high = train_gaussian(10, 0.9, 64, EstimatorKind::FLO, 0);
  bool ok_high = high.final_estimate > std::log(64.0);

  report(4, "gaussian benchmark with the joint critic", ok_low && ok_high,
         "d=2 rho=0.5: estimate " + format_double(low.final_estimate) + " vs truth " +
             format_double(truth) + " (err " + format_double(err) + ", " +
             format_double(secs) + " s); d=10 rho=0.9: estimate " +
             format_double(high.final_estimate) + " vs ln K = " +
             format_double(std::log(64.0)));
}

void criterion_5_infonce_cap() {
  Rng rng(109);
  bool ok = true;
  double worst = -1e300;
  for (int t = 0; t < 1000; ++t) {
    int k = 2 + rng.uniform_int(63);
    std::vector<double> g(static_cast<size_t>(k) * k);
    for (double& v : g) v = 10.0 * rng.normal();
    double est = infonce_loss(make_tensor({k, k}, std::move(g))).estimate;
    if (est > std::log(static_cast<double>(k)) + 1e-9) ok = false;
    worst = std::max(worst, est - std::log(static_cast<double>(k)));
  }
  report(5, "infonce never exceeds ln K", ok,
         "1000 fuzzed score matrices, worst margin " + format_double(worst));
}

void criterion_6_k_unbiased() {
  GaussianSampler sampler(GaussianSpec{1, 0.5});
  CriticConfig cc;
  cc.kind = CriticKind::bilinear;
  cc.dx = 1;
  cc.dy = 1;
  cc.hidden = {32};
  cc.embed_dim = 16;
  Rng crng(111);
  auto critic = make_critic(cc, crng);
  Rng rng(113);
  auto mean_se = [&](int k, int batches, double& mean, double& se) {
    std::vector<double> vals;
    for (int b = 0; b < batches; ++b) {
      Tensor X, Y;
      sampler.sample(k, rng, X, Y);
      Tape tape;
      Leaves leaves = critic->params.leaves(tape);
      EmaState ema;
      vals.push_back(compute_loss(EstimatorKind::FLO, *critic, ema, tape, leaves, nullptr,
                                  X, Y, NegativeStrategy::full, rng).estimate);
    }
    mean = std::accumulate(vals.begin(), vals.end(), 0.0) / batches;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    se = std::sqrt(var / (batches - 1) / batches);
  };
  double m2, se2, m128, se128;
  mean_se(2, 200, m2, se2);
  mean_se(128, 200, m128, se128);
  double gap = std::abs(m2 - m128);
  double limit = 3.0 * std::sqrt(se2 * se2 + se128 * se128);
  report(6, "FLO estimate is K-unbiased for a fixed critic", gap <= limit,
         "K=2 mean " + format_double(m2) + ", K=128 mean " + format_double(m128) +
             ", |gap| " + format_double(gap) + " vs 3 SE " + format_double(limit));
}

void criterion_7_grad_check() {
  double t0 = now_s();
  Rng rng(127);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    int k = 3 + rng.uniform_int(3);
    std::vector<double> vals(static_cast<size_t>(k) * k);
    for (double& v : vals) v = rng.normal();
    Tensor point = make_tensor({k, k}, std::move(vals));
    int which = t % 4;
    auto f = [&, k, which](Tape& tape, const Tensor& G) -> Tensor {
      switch (which) {
        case 0: {
          Tensor U = row_mean(tanh_op(G));
          return flo_loss(G, reshape(U, {k})).loss;
        }
        case 1: return infonce_loss(G).loss;
        case 2: return nwj_loss(G).loss;
        default:
          // tanh keeps the matmul output O(1): with raw G G^T entries near 10
          // the squared exponential reaches ~1e8 and central differences lose
          // too many digits to cancellation to resolve 1e-4 relative error.
          return mean_all(square(exp_op(clamp_exponent(tanh_op(matmul(G, transpose(G)))))));
      }
    };
    worst = std::max(worst, grad_check(f, point, 1e-5));
  }
  double secs = now_s() - t0;
  report(7, "reverse-mode gradients match finite differences", worst < 1e-4 && secs < 30.0,
         "100 random graphs, max relative error " + format_double(worst) + " in " +
             format_double(secs) + " s");
}

void criterion_8_fdv() {
  Rng rng(131);
  bool ok = true;
  double worst_val = 0.0, worst_grad = 0.0;
  for (int t = 0; t < 20; ++t) {
    int k = 3;
    std::vector<double> g(9);
    for (double& v : g) v = rng.normal();
    Tape tape;
    Tensor G = tape.leaf(make_tensor({k, k}, g));
    LossBatch lb = fdv_loss(G);
    double dv = dv_loss(make_tensor({k, k}, g)).estimate;
    worst_val = std::max(worst_val, std::abs(lb.estimate - dv));
    for (double v : lb.per_pair) {
      if (v != 1.0) ok = false;  // the surrogate ratio is identically 1 forward
    }
    tape.backward(lb.loss);
    std::vector<double> grad = tape.grad(G);
    double norm = 0.0;
    for (double v : grad) norm += v * v;
    if (norm <= 1e-12) ok = false;  // gradient must flow despite the flat value

    // Frozen-denominator surrogate as the finite-difference oracle.
    auto row_s = [&](const std::vector<double>& vals, int i) {
      double gii = vals[static_cast<size_t>(i) * k + i];
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += std::exp(vals[static_cast<size_t>(i) * k + j] - gii);
      return s;
    };
    std::vector<double> s0(k);
    for (int i = 0; i < k; ++i) s0[i] = row_s(g, i);
    auto surrogate = [&](const std::vector<double>& vals) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += row_s(vals, i) / s0[i];
      return -acc / k;
    };
    const double h = 1e-6;
    for (size_t idx = 0; idx < g.size(); ++idx) {
      std::vector<double> up = g, dn = g;
      up[idx] += h;
      dn[idx] -= h;
      double fd = (surrogate(up) - surrogate(dn)) / (2.0 * h);
      worst_grad = std::max(worst_grad, std::abs(grad[idx] - fd));
    }
  }
  report(8, "FDV reports the DV value with the surrogate gradient",
         ok && worst_val < 1e-12 && worst_grad < 1e-5,
         "20 matrices: max |value - DV| " + format_double(worst_val) +
             ", max gradient error " + format_double(worst_grad));
}

std::vector<Episode> episode_batch(const MetaConfig& cfg, long step) {
  Rng rng = Rng(cfg.seed).split(2 * static_cast<uint64_t>(step));
  std::vector<Episode> episodes;
  episodes.reserve(cfg.episode_size);
  for (int i = 0; i < cfg.episode_size; ++i) {
    SineTask task = sample_task(rng);
    episodes.push_back(sample_episode(task, cfg.m, cfg.q, rng));
  }
  return episodes;
}

void criterion_9_meta() {
  MetaConfig cfg;
  cfg.seed = 0;
  MetaTrainState untrained = MetaTrainState::make(cfg);
  double base_mse = eval_meta(untrained, 100, cfg.m, cfg.q, 1000).mean_mse;

  MetaTrainState state = MetaTrainState::make(cfg);
  double t0 = now_s();
  for (int s = 0; s < 20000; ++s) meta_step(state, episode_batch(cfg, state.step));
  double train_s = now_s() - t0;
  double mse = eval_meta(state, 100, cfg.m, cfg.q, 1000).mean_mse;

  // One Meta-FLO alternation vs one FOMAML outer step, same episode stream.
  FomamlState fstate = FomamlState::make(cfg);
  MetaTrainState tstate = MetaTrainState::make(cfg);
  double m0 = now_s();
  for (int s = 0; s < 20; ++s) meta_step(tstate, episode_batch(cfg, tstate.step));
  double meta_ms = (now_s() - m0) * 1000.0 / 20.0;
  double f0 = now_s();
  for (int s = 0; s < 20; ++s) fomaml_step(fstate, episode_batch(cfg, fstate.step));
  double fomaml_ms = (now_s() - f0) * 1000.0 / 20.0;

  bool ok = mse < 1.0 && mse < 0.25 * base_mse && train_s < 1800.0 && meta_ms < fomaml_ms;
  report(9, "Meta-FLO trains to low few-shot error within budget", ok,
         "query MSE " + format_double(mse) + " vs untrained " + format_double(base_mse) +
             " after 20000 steps in " + format_double(train_s) + " s; step cost " +
             format_double(meta_ms) + " ms vs fomaml " + format_double(fomaml_ms) + " ms");
}

void criterion_10_properties() {
  bool ok = true;
  std::string detail;

  // Attention-pool permutation invariance.
  MetaConfig acfg;
  acfg.backend = PromptBackend::attention;
  acfg.m = 5;
  acfg.seed = 3;
  MetaTrainState astate = MetaTrainState::make(acfg);
  Tape tape;
  Leaves leaves = astate.theta.leaves(tape);
  Rng rng(137);
  double worst_perm = 0.0;
  for (int t = 0; t < 20; ++t) {
    SineTask task = sample_task(rng);
    Episode ep = sample_episode(task, acfg.m, 1, rng);
    std::vector<double> xi(acfg.d_xi);
    for (double& v : xi) v = rng.normal();
    Tensor base = astate.encoder.encode_one(leaves, ep.support, xi);
    std::vector<int> perm = rng.permutation(acfg.m);
    Pairs shuffled;
    for (int i : perm) {
      shuffled.x.push_back(ep.support.x[i]);
      shuffled.y.push_back(ep.support.y[i]);
    }
    Tensor permuted = astate.encoder.encode_one(leaves, shuffled, xi);
    for (int j = 0; j < acfg.d_e; ++j) {
      worst_perm = std::max(worst_perm, std::abs(base.values()[j] - permuted.values()[j]));
    }
  }
  if (worst_perm >= 1e-9) ok = false;
  detail += "permutation gap " + format_double(worst_perm);

  // lambda = 0 gradient equivalence, with phi provably out of the graph.
  MetaConfig mcfg;
  mcfg.episode_size = 8;
  mcfg.hidden = {32, 32};
  mcfg.d_e = 8;
  mcfg.d_xi = 2;
  mcfg.critic_hidden = {16};
  mcfg.critic_embed = 8;
  mcfg.seed = 5;
  MetaTrainState a = MetaTrainState::make(mcfg);
  MetaTrainState b = MetaTrainState::make(mcfg);
  for (auto& [name, p] : b.critic->params) {
    for (double& v : p.value) v += 0.5;  // different phi must not matter
  }
  std::vector<Episode> eps = episode_batch(mcfg, 0);
  Rng nrng(139);
  std::vector<double> noise(static_cast<size_t>(mcfg.episode_size) * mcfg.d_xi);
  for (double& v : noise) v = nrng.normal();
  meta_theta_grads(a, eps, noise, 0.0);
  double reg_loss = regression_theta_grads(b, eps, noise);
  double worst_l0 = 0.0;
  for (const auto& [name, pa] : a.theta) {
    const auto& pb = b.theta.at(name);
    for (size_t i = 0; i < pa.grad.size(); ++i) {
      worst_l0 = std::max(worst_l0, std::abs(pa.grad[i] - pb.grad[i]));
    }
  }
  for (const auto& [name, p] : a.critic->params) {
    for (double g : p.grad) {
      if (g != 0.0) ok = false;  // theta pass must leave phi grads untouched
    }
  }
  if (worst_l0 > 1e-12 || !std::isfinite(reg_loss)) ok = false;
  detail += ", lambda0 grad gap " + format_double(worst_l0);

  // Deterministic CSV bytes: rerun of an identical seeded sweep matches, and
  // the worker count does not change the result.
  SweepOptions sopts;
  sopts.rho_grid = {0.3};
  sopts.d = 1;
  sopts.kinds = {EstimatorKind::FLO, EstimatorKind::NWJ};
  sopts.steps = 5;
  sopts.batch_k = 8;
  sopts.trials = 2;
  sopts.eval_n_final = 32;
  sopts.seed = 17;
  sopts.critic = CriticKind::bilinear;
  auto rows1 = run_sweep(sopts);
  auto rows2 = run_sweep(sopts);
  for (auto& r : rows1) r.wall_ms = 0.0;
  for (auto& r : rows2) r.wall_ms = 0.0;
  ConfigEcho echo = {{"seed", "17"}};
  if (csv_mi_sweep(echo, rows1) != csv_mi_sweep(echo, rows2)) ok = false;
  detail += ", sweep CSV bytes " +
            std::string(csv_mi_sweep(echo, rows1) == csv_mi_sweep(echo, rows2)
                            ? "stable" : "UNSTABLE");

  report(10, "property suite", ok, detail);
}

}  // namespace

int main() {
  criterion_1_tightness();
  criterion_2_ordering();
  criterion_3_alignment();
  criterion_4_gaussian();
  criterion_5_infonce_cap();
  criterion_6_k_unbiased();
  criterion_7_grad_check();
  criterion_8_fdv();
  criterion_9_meta();
  criterion_10_properties();
  std::printf("%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
