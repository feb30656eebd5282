#include "fenlo/meta.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "fenlo/gaussian.hpp"

namespace fenlo {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

SineTask::SineTask(double kappa_, double gamma_) : kappa(kappa_), gamma(gamma_) {
  if (kappa < 0.1 || kappa > 5.0) throw std::domain_error("SineTask: kappa must lie in [0.1, 5]");
  if (gamma < 0.0 || gamma > kPi) throw std::domain_error("SineTask: gamma must lie in [0, pi]");
}

double SineTask::eval(double x) const { return kappa * std::sin(x - gamma); }

SineTask sample_task(Rng& rng) {
  return SineTask(rng.uniform(0.1, 5.0), rng.uniform(0.0, kPi));
}

Episode sample_episode(const SineTask& task, int m, int q, Rng& rng) {
  if (m < 1 || q < 1) throw std::invalid_argument("sample_episode: m >= 1 and q >= 1 required");
  Episode ep{Pairs{}, Pairs{}, task};
  for (int i = 0; i < m; ++i) {
    double x = rng.uniform(-5.0, 5.0);
    ep.support.x.push_back(x);
    ep.support.y.push_back(task.eval(x));
  }
  for (int i = 0; i < q; ++i) {
    double x = rng.uniform(-5.0, 5.0);
    ep.query.x.push_back(x);
    ep.query.y.push_back(task.eval(x));
  }
  return ep;
}

PromptBackend backend_from_name(const std::string& name) {
  if (name == "mlp") return PromptBackend::mlp;
  if (name == "attention") return PromptBackend::attention;
  throw std::invalid_argument("unknown prompt backend '" + name + "'");
}

std::string backend_name(PromptBackend backend) {
  return backend == PromptBackend::mlp ? "mlp" : "attention";
}

void MetaConfig::validate() const {
  if (m < 1 || q < 1) throw std::invalid_argument("meta config: m >= 1 and q >= 1 required");
  if (episode_size < 2) throw std::invalid_argument("meta config: episode_size >= 2 required");
  if (d_xi < 0) throw std::invalid_argument("meta config: d_xi >= 0 required");
  if (d_e < 1) throw std::invalid_argument("meta config: d_e >= 1 required");
  if (hidden.empty() || critic_hidden.empty()) {
    throw std::invalid_argument("meta config: hidden layer lists must be nonempty");
  }
  if (lambda < 0.0) throw std::invalid_argument("meta config: lambda >= 0 required");
  if (lr <= 0.0 || inner_lr < 0.0) throw std::invalid_argument("meta config: invalid learning rate");
  if (eps_clip <= 0.0) throw std::invalid_argument("meta config: eps_clip > 0 required");
}

// ---------------------------------------------------------------------------
// Prompt encoder

PromptEncoder::PromptEncoder(const MetaConfig& cfg) : cfg_(cfg) {}

void PromptEncoder::init(ParamStore& params, Rng& rng) const {
  if (cfg_.backend == PromptBackend::mlp) {
    std::vector<int> dims = {2 * cfg_.m + cfg_.d_xi};
    dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    dims.push_back(cfg_.d_e);
    mlp_init(params, "prompt", dims, rng);
    return;
  }
  int dm = cfg_.attn_dim, ff = cfg_.attn_ff, dt = 2 + cfg_.d_xi;
  params.add("prompt.tok_w", {dt, dm}, glorot_uniform(dt, dm, rng));
  params.add("prompt.tok_b", {1, dm}, std::vector<double>(dm, 0.0));
  params.add("prompt.cls", {1, dm}, glorot_uniform(1, dm, rng));
  params.add("prompt.wq", {dm, dm}, glorot_uniform(dm, dm, rng));
  params.add("prompt.wk", {dm, dm}, glorot_uniform(dm, dm, rng));
  params.add("prompt.wv", {dm, dm}, glorot_uniform(dm, dm, rng));
  params.add("prompt.wo", {dm, dm}, glorot_uniform(dm, dm, rng));
  params.add("prompt.ob", {1, dm}, std::vector<double>(dm, 0.0));
  params.add("prompt.ff_w1", {dm, ff}, glorot_uniform(dm, ff, rng));
  params.add("prompt.ff_b1", {1, ff}, std::vector<double>(ff, 0.0));
  params.add("prompt.ff_w2", {ff, dm}, glorot_uniform(ff, dm, rng));
  params.add("prompt.ff_b2", {1, dm}, std::vector<double>(dm, 0.0));
  params.add("prompt.out_w", {dm, cfg_.d_e}, glorot_uniform(dm, cfg_.d_e, rng));
  params.add("prompt.out_b", {1, cfg_.d_e}, std::vector<double>(cfg_.d_e, 0.0));
}

namespace {

// Support indices sorted ascending by x (canonical order for the mlp backend).
std::vector<int> sorted_order(const Pairs& support) {
  std::vector<int> order(support.x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return support.x[a] < support.x[b]; });
  return order;
}

}  // namespace

Tensor PromptEncoder::encode(const Leaves& leaves, const std::vector<const Pairs*>& supports,
                             const std::vector<double>& noise) const {
  if (supports.empty()) throw std::invalid_argument("prompt encoder: empty support batch");
  if (!noise.empty() &&
      noise.size() != supports.size() * static_cast<size_t>(cfg_.d_xi)) {
    throw std::invalid_argument("prompt encoder: noise size must be n * d_xi");
  }
  return cfg_.backend == PromptBackend::mlp ? encode_mlp(leaves, supports, noise)
                                            : encode_attention(leaves, supports, noise);
}

Tensor PromptEncoder::encode_mlp(const Leaves& leaves, const std::vector<const Pairs*>& supports,
                                 const std::vector<double>& noise) const {
  int n = static_cast<int>(supports.size());
  int width = 2 * cfg_.m + cfg_.d_xi;
  std::vector<double> rows(static_cast<size_t>(n) * width);
  for (int i = 0; i < n; ++i) {
    const Pairs& s = *supports[i];
    if (s.size() != cfg_.m) {
      throw std::invalid_argument("prompt encoder (mlp backend): support size must equal m");
    }
    auto order = sorted_order(s);
    double* row = &rows[static_cast<size_t>(i) * width];
    for (int k = 0; k < cfg_.m; ++k) {
      row[2 * k] = s.x[order[k]];
      row[2 * k + 1] = s.y[order[k]];
    }
    for (int j = 0; j < cfg_.d_xi; ++j) {
      row[2 * cfg_.m + j] = noise.empty() ? 0.0 : noise[static_cast<size_t>(i) * cfg_.d_xi + j];
    }
  }
  Tensor X = make_tensor({n, width}, std::move(rows));
  return mlp_forward(leaves, "prompt", static_cast<int>(cfg_.hidden.size()) + 1, X);
}

Tensor PromptEncoder::encode_attention(const Leaves& leaves,
                                       const std::vector<const Pairs*>& supports,
                                       const std::vector<double>& noise) const {
  int dm = cfg_.attn_dim, dt = 2 + cfg_.d_xi;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dm));
  Tensor out;
  bool first = true;
  for (size_t i = 0; i < supports.size(); ++i) {
    const Pairs& s = *supports[i];
    int m = s.size();
    if (m < 1) throw std::invalid_argument("prompt encoder: support must be nonempty");
    std::vector<double> tok(static_cast<size_t>(m) * dt);
    for (int k = 0; k < m; ++k) {
      tok[static_cast<size_t>(k) * dt] = s.x[k];
      tok[static_cast<size_t>(k) * dt + 1] = s.y[k];
      for (int j = 0; j < cfg_.d_xi; ++j) {
        tok[static_cast<size_t>(k) * dt + 2 + j] =
            noise.empty() ? 0.0 : noise[i * cfg_.d_xi + j];
      }
    }
    Tensor tokens = make_tensor({m, dt}, std::move(tok));
    Tensor htok = add(matmul(tokens, leaves.at("prompt.tok_w")), leaves.at("prompt.tok_b"));
    Tensor h0 = concat_rows(leaves.at("prompt.cls"), htok);
    Tensor q = matmul(h0, leaves.at("prompt.wq"));
    Tensor k = matmul(h0, leaves.at("prompt.wk"));
    Tensor v = matmul(h0, leaves.at("prompt.wv"));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
    Tensor ex = exp_op(sub(scores, row_max_detached(scores)));
    Tensor attn = div(ex, row_sum(ex));
    Tensor h1 = add(h0, add(matmul(matmul(attn, v), leaves.at("prompt.wo")),
                            leaves.at("prompt.ob")));
    Tensor ff = add(matmul(relu(add(matmul(h1, leaves.at("prompt.ff_w1")),
                                    leaves.at("prompt.ff_b1"))),
                           leaves.at("prompt.ff_w2")),
                    leaves.at("prompt.ff_b2"));
    Tensor h2 = add(h1, ff);
    Tensor e = add(matmul(take_row(h2, 0), leaves.at("prompt.out_w")),
                   leaves.at("prompt.out_b"));
    out = first ? e : concat_rows(out, e);
    first = false;
  }
  return out;
}

Tensor PromptEncoder::encode_one(const Leaves& leaves, const Pairs& support,
                                 const std::vector<double>& xi) const {
  if (static_cast<int>(xi.size()) != cfg_.d_xi) {
    throw std::invalid_argument("prompt encoder: xi must have d_xi entries");
  }
  return encode(leaves, {&support}, xi);
}

Tensor PromptEncoder::encode_one_data(const Leaves& leaves, const Pairs& support) const {
  return encode(leaves, {&support}, {});
}

std::vector<double> rkhs_embed(const Pairs& support, double sigma,
                               const std::vector<std::vector<double>>& z_ref) {
  if (sigma <= 0.0) throw std::domain_error("rkhs_embed: bandwidth must be positive");
  if (z_ref.empty()) throw std::invalid_argument("rkhs_embed: at least one reference point required");
  int m = support.size();
  if (m < 1) throw std::invalid_argument("rkhs_embed: empty support");
  std::vector<double> out(z_ref.size());
  for (size_t j = 0; j < z_ref.size(); ++j) {
    if (z_ref[j].size() != 2) throw std::invalid_argument("rkhs_embed: reference points live in R^2");
    double acc = 0.0;
    for (int k = 0; k < m; ++k) {
      double dx = z_ref[j][0] - support.x[k];
      double dy = z_ref[j][1] - support.y[k];
      acc += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
    out[j] = acc / m;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Meta-FLO training

MetaTrainState MetaTrainState::make(const MetaConfig& cfg) {
  cfg.validate();
  MetaTrainState st{cfg, PromptEncoder(cfg), ParamStore{}, nullptr, AdamState{}, AdamState{}, 0};
  Rng base(cfg.seed);
  Rng enc_rng = base.split(11);
  Rng pred_rng = base.split(12);
  Rng critic_rng = base.split(13);
  st.encoder.init(st.theta, enc_rng);
  std::vector<int> pd = {1 + cfg.d_e};
  pd.insert(pd.end(), cfg.hidden.begin(), cfg.hidden.end());
  pd.push_back(1);
  mlp_init(st.theta, "pred", pd, pred_rng);
  CriticConfig cc;
  cc.kind = CriticKind::bilinear;
  cc.dx = cfg.flo_input == FloInput::raw ? 2 * cfg.m : cfg.d_e;
  cc.dy = cfg.d_e;
  cc.hidden = cfg.critic_hidden;
  cc.embed_dim = cfg.critic_embed;
  st.critic = make_critic(cc, critic_rng);
  st.opt_theta.lr = cfg.lr;
  st.opt_phi.lr = cfg.lr;
  return st;
}

namespace {

// Raw-support FLO input: the mlp backend's canonical sorted row, noise-free.
Tensor raw_support_matrix(const std::vector<Episode>& episodes, int m) {
  int n = static_cast<int>(episodes.size());
  std::vector<double> rows(static_cast<size_t>(n) * 2 * m);
  for (int i = 0; i < n; ++i) {
    const Pairs& s = episodes[i].support;
    if (s.size() != m) throw std::invalid_argument("raw FLO input: support size must equal m");
    auto order = sorted_order(s);
    for (int k = 0; k < m; ++k) {
      rows[static_cast<size_t>(i) * 2 * m + 2 * k] = s.x[order[k]];
      rows[static_cast<size_t>(i) * 2 * m + 2 * k + 1] = s.y[order[k]];
    }
  }
  return make_tensor({n, 2 * m}, std::move(rows));
}

Tensor detached(const Tensor& t) { return Tensor{t.shape, t.data, nullptr, -1}; }

struct ThetaPass {
  MetaStepStats stats;
  Tensor v_values, e_values;  // detached embeddings for the phi update
};

ThetaPass run_theta_pass(MetaTrainState& state, const std::vector<Episode>& episodes,
                         const std::vector<double>& noise, double lambda) {
  const MetaConfig& cfg = state.config;
  int n_e = static_cast<int>(episodes.size());
  if (n_e < 2) throw std::invalid_argument("meta_step: n_e >= 2 required");
  int q = episodes[0].query.size();
  for (const Episode& ep : episodes) {
    if (ep.query.size() != q) throw std::invalid_argument("meta_step: ragged query sizes");
  }

  Tape tape;
  Leaves th = state.theta.leaves(tape);
  Leaves ph = state.critic->params.leaves(tape);
  std::vector<const Pairs*> supports;
  supports.reserve(n_e);
  for (const Episode& ep : episodes) supports.push_back(&ep.support);

  Tensor E = state.encoder.encode(th, supports, noise);
  Tensor V = cfg.flo_input == FloInput::raw ? raw_support_matrix(episodes, cfg.m)
                                            : state.encoder.encode(th, supports, {});

  std::vector<double> xq(static_cast<size_t>(n_e) * q), yq(xq.size());
  for (int i = 0; i < n_e; ++i) {
    for (int j = 0; j < q; ++j) {
      xq[static_cast<size_t>(i) * q + j] = episodes[i].query.x[j];
      yq[static_cast<size_t>(i) * q + j] = episodes[i].query.y[j];
    }
  }
  int n_pred_layers = static_cast<int>(cfg.hidden.size()) + 1;
  Tensor input = concat_cols(make_tensor({n_e * q, 1}, std::move(xq)), tile_rows_outer(E, q));
  Tensor pred = mlp_forward(th, "pred", n_pred_layers, input);
  Tensor loss_r = mean_all(square(sub(pred, make_tensor({n_e * q, 1}, std::move(yq)))));

  ScoreBatch sb = state.critic->score_matrix(tape, ph, V, E);
  LossBatch fb = flo_loss(sb.G, sb.U);

  Tensor total = loss_r;
  if (lambda != 0.0) {
    Tensor mi = add_const(neg(fb.loss), 1.0);
    total = add(loss_r, scale(sqrt_op(clamp_min(mi, cfg.eps_clip)), lambda));
  }
  tape.backward(total);
  state.theta.collect_grads(tape, th);

  ThetaPass out;
  out.stats = {loss_r.scalar(), fb.estimate, total.scalar()};
  out.v_values = detached(V);
  out.e_values = detached(E);
  return out;
}

std::vector<double> draw_noise(const MetaConfig& cfg, long step, int n_e) {
  if (cfg.d_xi == 0) return {};
  Rng rng = Rng(cfg.seed).split(2 * static_cast<uint64_t>(step) + 1);
  std::vector<double> noise(static_cast<size_t>(n_e) * cfg.d_xi);
  for (double& v : noise) v = rng.normal();
  return noise;
}

}  // namespace

MetaStepStats meta_theta_grads(MetaTrainState& state, const std::vector<Episode>& episodes,
                               const std::vector<double>& noise, double lambda) {
  return run_theta_pass(state, episodes, noise, lambda).stats;
}

double regression_theta_grads(MetaTrainState& state, const std::vector<Episode>& episodes,
                              const std::vector<double>& noise) {
  // Same graph restricted to L_R: the FLO branch is never built.
  const MetaConfig& cfg = state.config;
  int n_e = static_cast<int>(episodes.size());
  if (n_e < 1) throw std::invalid_argument("regression step: n_e >= 1 required");
  int q = episodes[0].query.size();
  Tape tape;
  Leaves th = state.theta.leaves(tape);
  std::vector<const Pairs*> supports;
  for (const Episode& ep : episodes) supports.push_back(&ep.support);
  Tensor E = state.encoder.encode(th, supports, noise);
  std::vector<double> xq(static_cast<size_t>(n_e) * q), yq(xq.size());
  for (int i = 0; i < n_e; ++i) {
    for (int j = 0; j < q; ++j) {
      xq[static_cast<size_t>(i) * q + j] = episodes[i].query.x[j];
      yq[static_cast<size_t>(i) * q + j] = episodes[i].query.y[j];
    }
  }
  Tensor input = concat_cols(make_tensor({n_e * q, 1}, std::move(xq)), tile_rows_outer(E, q));
  Tensor pred = mlp_forward(th, "pred", static_cast<int>(cfg.hidden.size()) + 1, input);
  Tensor loss_r = mean_all(square(sub(pred, make_tensor({n_e * q, 1}, std::move(yq)))));
  tape.backward(loss_r);
  state.theta.collect_grads(tape, th);
  return loss_r.scalar();
}

MetaStepStats meta_step(MetaTrainState& state, const std::vector<Episode>& episodes) {
  if (episodes.size() < 2) throw std::invalid_argument("meta_step: n_e >= 2 required");
  std::vector<double> noise = draw_noise(state.config, state.step,
                                         static_cast<int>(episodes.size()));
  ThetaPass pass;
  try {
    pass = run_theta_pass(state, episodes, noise, state.config.lambda);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw MetaAbort("meta", state.step, e.what());
  }
  adam_step(state.theta, state.opt_theta);

  // Adversarial phi update: embeddings enter as constants, so no gradient
  // reaches theta and only the critic moves.
  try {
    Tape tape;
    Leaves ph = state.critic->params.leaves(tape);
    ScoreBatch sb = state.critic->score_matrix(tape, ph, pass.v_values, pass.e_values);
    LossBatch fb = flo_loss(sb.G, sb.U);
    tape.backward(fb.loss);  // minimizing the FLO loss maximizes the MI estimate
    state.critic->params.collect_grads(tape, ph);
    adam_step(state.critic->params, state.opt_phi);
  } catch (const std::runtime_error& e) {
    throw MetaAbort("flo", state.step, e.what());
  }
  ++state.step;
  return pass.stats;
}

// ---------------------------------------------------------------------------
// FOMAML baseline

FomamlState FomamlState::make(const MetaConfig& cfg) {
  cfg.validate();
  FomamlState st{cfg, ParamStore{}, AdamState{}, 0};
  std::vector<int> dims = {1};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  Rng rng = Rng(cfg.seed).split(77);
  mlp_init(st.theta, "pred", dims, rng);
  st.opt.lr = cfg.lr;
  return st;
}

double fomaml_step(FomamlState& state, const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("fomaml_step: n_e >= 1 required");
  const MetaConfig& cfg = state.config;
  int n_layers = static_cast<int>(cfg.hidden.size()) + 1;
  std::map<std::string, std::vector<double>> acc;
  for (const auto& [name, p] : state.theta) acc[name].assign(p.value.size(), 0.0);
  double total_q = 0.0;
  try {
    for (const Episode& ep : episodes) {
      Tape ts;
      Leaves th = state.theta.leaves(ts);
      int m = ep.support.size();
      Tensor ps = mlp_forward(th, "pred", n_layers, make_tensor({m, 1}, ep.support.x));
      Tensor ls = mean_all(square(sub(ps, make_tensor({m, 1}, ep.support.y))));
      ts.backward(ls);

      Tape tq;
      Leaves adapted;
      for (const auto& [name, p] : state.theta) {
        const auto& g = ts.grad(th.at(name));
        std::vector<double> v = p.value;
        for (size_t i = 0; i < v.size(); ++i) v[i] -= cfg.inner_lr * g[i];
        adapted.emplace(name, tq.leaf(make_tensor(p.shape, std::move(v))));
      }
      int q = ep.query.size();
      Tensor pq = mlp_forward(adapted, "pred", n_layers, make_tensor({q, 1}, ep.query.x));
      Tensor lq = mean_all(square(sub(pq, make_tensor({q, 1}, ep.query.y))));
      total_q += lq.scalar();
      tq.backward(lq);
      for (const auto& [name, leaf] : adapted) {
        const auto& g = tq.grad(leaf);
        auto& a = acc[name];
        for (size_t i = 0; i < a.size(); ++i) a[i] += g[i];
      }
    }
  } catch (const std::runtime_error& e) {
    throw MetaAbort("fomaml", state.step, e.what());
  }
  double inv = 1.0 / static_cast<double>(episodes.size());
  for (auto& [name, p] : state.theta) {
    const auto& a = acc[name];
    for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] = a[i] * inv;
  }
  adam_step(state.theta, state.opt);
  ++state.step;
  return total_q * inv;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation

namespace {

// f_theta on a query batch given a fixed 1 x d_e embedding.
std::vector<double> predict_with_embedding(const MetaTrainState& state, const Leaves& th,
                                           const Tensor& e, const std::vector<double>& xs) {
  int n = static_cast<int>(xs.size());
  Tensor input = concat_cols(make_tensor({n, 1}, xs), tile_rows_outer(e, n));
  Tensor pred = mlp_forward(th, "pred",
                            static_cast<int>(state.config.hidden.size()) + 1, input);
  return *pred.data;
}

}  // namespace

double adapt_predict(const MetaTrainState& state, const Pairs& support,
                     double x_query, Rng& rng) {
  std::vector<double> xi(state.config.d_xi);
  for (double& v : xi) v = rng.normal();
  Tape tape;
  Leaves th = state.theta.leaves(tape);
  Tensor e = state.encoder.encode_one(th, support, xi);
  return predict_with_embedding(state, th, e, {x_query})[0];
}

void predict_ensemble(const MetaTrainState& state, const Pairs& support, double x_query,
                      int n_samples, Rng& rng, double& mean, double& stddev) {
  if (n_samples < 1) throw std::invalid_argument("predict_ensemble: n_samples >= 1 required");
  std::vector<double> ys(n_samples);
  for (int s = 0; s < n_samples; ++s) ys[s] = adapt_predict(state, support, x_query, rng);
  mean = std::accumulate(ys.begin(), ys.end(), 0.0) / n_samples;
  if (n_samples == 1) {
    stddev = 0.0;
    return;
  }
  double ss = 0.0;
  for (double y : ys) ss += (y - mean) * (y - mean);
  stddev = std::sqrt(ss / (n_samples - 1));
}

namespace {

template <typename Fn>
MetaEvalResult eval_tasks(int n_tasks, Fn&& per_task) {
  if (n_tasks < 1) throw std::invalid_argument("eval: n_tasks >= 1 required");
  MetaEvalResult out;
  out.tasks.resize(n_tasks);
  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      int t = next.fetch_add(1);
      if (t >= n_tasks) return;
      out.tasks[t] = per_task(t);
    }
  };
  int n_threads = std::min(worker_threads(), n_tasks);
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const TaskEval& te : out.tasks) out.mean_mse += te.query_mse;
  out.mean_mse /= n_tasks;
  return out;
}

}  // namespace

MetaEvalResult eval_meta(const MetaTrainState& state, int n_tasks, int m, int q,
                         uint64_t seed) {
  return eval_tasks(n_tasks, [&](int t) {
    Rng rng = Rng(seed).split(t);
    SineTask task = sample_task(rng);
    Episode ep = sample_episode(task, m, q, rng);
    std::vector<double> xi(state.config.d_xi);
    for (double& v : xi) v = rng.normal();
    Tape tape;
    Leaves th = state.theta.leaves(tape);
    Tensor e = state.encoder.encode_one(th, ep.support, xi);
    std::vector<double> pred = predict_with_embedding(state, th, e, ep.query.x);
    double mse = 0.0;
    for (int j = 0; j < q; ++j) {
      double d = pred[j] - ep.query.y[j];
      mse += d * d;
    }
    return TaskEval{t, task.kappa, task.gamma, mse / q};
  });
}

MetaEvalResult eval_fomaml(const FomamlState& state, int n_tasks, int m, int q,
                           uint64_t seed) {
  int n_layers = static_cast<int>(state.config.hidden.size()) + 1;
  return eval_tasks(n_tasks, [&](int t) {
    Rng rng = Rng(seed).split(t);
    SineTask task = sample_task(rng);
    Episode ep = sample_episode(task, m, q, rng);
    Tape ts;
    Leaves th = state.theta.leaves(ts);
    Tensor ps = mlp_forward(th, "pred", n_layers, make_tensor({m, 1}, ep.support.x));
    Tensor ls = mean_all(square(sub(ps, make_tensor({m, 1}, ep.support.y))));
    ts.backward(ls);
    Tape tq;
    Leaves adapted;
    for (const auto& [name, p] : state.theta) {
      const auto& g = ts.grad(th.at(name));
      std::vector<double> v = p.value;
      for (size_t i = 0; i < v.size(); ++i) v[i] -= state.config.inner_lr * g[i];
      adapted.emplace(name, tq.leaf(make_tensor(p.shape, std::move(v))));
    }
    Tensor pq = mlp_forward(adapted, "pred", n_layers, make_tensor({q, 1}, ep.query.x));
    double mse = 0.0;
    for (int j = 0; j < q; ++j) {
      double d = (*pq.data)[j] - ep.query.y[j];
      mse += d * d;
    }
    return TaskEval{t, task.kappa, task.gamma, mse / q};
  });
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "fenlo-meta-checkpoint";
constexpr int kVersion = 1;

void write_int_list(std::ostream& os, const char* key, const std::vector<int>& v) {
  os << key << ' ' << v.size();
  for (int x : v) os << ' ' << x;
  os << '\n';
}

std::vector<int> read_int_list(std::istream& is, const std::string& key) {
  std::string k;
  size_t n;
  is >> k >> n;
  if (k != key) throw std::runtime_error("checkpoint: expected key '" + key + "', got '" + k + "'");
  std::vector<int> v(n);
  for (size_t i = 0; i < n; ++i) is >> v[i];
  return v;
}

template <typename T>
T read_kv(std::istream& is, const std::string& key) {
  std::string k;
  T v;
  is >> k >> v;
  if (!is || k != key) throw std::runtime_error("checkpoint: expected key '" + key + "'");
  return v;
}

void write_config(std::ostream& os, const MetaConfig& cfg) {
  os << "backend " << backend_name(cfg.backend) << '\n'
     << "m " << cfg.m << '\n'
     << "q " << cfg.q << '\n'
     << "episode_size " << cfg.episode_size << '\n'
     << "d_xi " << cfg.d_xi << '\n'
     << "d_e " << cfg.d_e << '\n';
  write_int_list(os, "hidden", cfg.hidden);
  os << "attn_dim " << cfg.attn_dim << '\n'
     << "attn_ff " << cfg.attn_ff << '\n';
  write_int_list(os, "critic_hidden", cfg.critic_hidden);
  os << "critic_embed " << cfg.critic_embed << '\n'
     << "lambda " << cfg.lambda << '\n'
     << "lr " << cfg.lr << '\n'
     << "eps_clip " << cfg.eps_clip << '\n'
     << "inner_lr " << cfg.inner_lr << '\n'
     << "flo_input " << (cfg.flo_input == FloInput::raw ? "raw" : "embedding") << '\n'
     << "seed " << cfg.seed << '\n';
}

MetaConfig read_config(std::istream& is) {
  MetaConfig cfg;
  cfg.backend = backend_from_name(read_kv<std::string>(is, "backend"));
  cfg.m = read_kv<int>(is, "m");
  cfg.q = read_kv<int>(is, "q");
  cfg.episode_size = read_kv<int>(is, "episode_size");
  cfg.d_xi = read_kv<int>(is, "d_xi");
  cfg.d_e = read_kv<int>(is, "d_e");
  cfg.hidden = read_int_list(is, "hidden");
  cfg.attn_dim = read_kv<int>(is, "attn_dim");
  cfg.attn_ff = read_kv<int>(is, "attn_ff");
  cfg.critic_hidden = read_int_list(is, "critic_hidden");
  cfg.critic_embed = read_kv<int>(is, "critic_embed");
  cfg.lambda = read_kv<double>(is, "lambda");
  cfg.lr = read_kv<double>(is, "lr");
  cfg.eps_clip = read_kv<double>(is, "eps_clip");
  cfg.inner_lr = read_kv<double>(is, "inner_lr");
  std::string fi = read_kv<std::string>(is, "flo_input");
  if (fi != "raw" && fi != "embedding") throw std::runtime_error("checkpoint: bad flo_input");
  cfg.flo_input = fi == "raw" ? FloInput::raw : FloInput::embedding;
  cfg.seed = read_kv<uint64_t>(is, "seed");
  return cfg;
}

void write_params(std::ostream& os, const char* label, const ParamStore& params) {
  os << "params " << label << ' ' << params.size() << '\n';
  for (const auto& [name, p] : params) {
    os << name << ' ' << p.shape.size();
    for (int d : p.shape) os << ' ' << d;
    os << '\n';
    for (size_t i = 0; i < p.value.size(); ++i) os << (i ? " " : "") << p.value[i];
    os << '\n';
  }
}

void read_params(std::istream& is, const std::string& label, ParamStore& params) {
  std::string k, l;
  size_t n;
  is >> k >> l >> n;
  if (k != "params" || l != label) throw std::runtime_error("checkpoint: bad params block");
  if (n != params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (size_t i = 0; i < n; ++i) {
    std::string name;
    size_t ndim;
    is >> name >> ndim;
    if (!params.contains(name)) throw std::runtime_error("checkpoint: unknown parameter " + name);
    auto& p = params.at(name);
    if (ndim != p.shape.size()) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (size_t d = 0; d < ndim; ++d) {
      int dim;
      is >> dim;
      if (dim != p.shape[d]) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    for (double& v : p.value) is >> v;
    if (!is) throw std::runtime_error("checkpoint: truncated values for " + name);
  }
}

void write_adam(std::ostream& os, const char* label, const AdamState& st) {
  os << "adam " << label << ' ' << st.t << ' ' << st.m.size() << '\n';
  auto dump = [&](const char* tag, const std::map<std::string, std::vector<double>>& mv) {
    for (const auto& [name, v] : mv) {
      os << tag << ' ' << name << ' ' << v.size();
      for (double x : v) os << ' ' << x;
      os << '\n';
    }
  };
  dump("m", st.m);
  dump("v", st.v);
}

void read_adam(std::istream& is, const std::string& label, AdamState& st) {
  std::string k, l;
  size_t n;
  is >> k >> l >> st.t >> n;
  if (k != "adam" || l != label) throw std::runtime_error("checkpoint: bad adam block");
  auto load = [&](const char* tag, std::map<std::string, std::vector<double>>& mv) {
    for (size_t i = 0; i < n; ++i) {
      std::string t, name;
      size_t sz;
      is >> t >> name >> sz;
      if (t != tag) throw std::runtime_error("checkpoint: bad adam entry");
      auto& v = mv[name];
      v.resize(sz);
      for (double& x : v) is >> x;
    }
    if (!is) throw std::runtime_error("checkpoint: truncated adam block");
  };
  load("m", st.m);
  load("v", st.v);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os << std::setprecision(17);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic;
  int version;
  is >> magic >> version;
  if (magic != kMagic || version != kVersion) {
    throw std::runtime_error("not a recognized checkpoint file: " + path);
  }
  return is;
}

}  // namespace

void save_checkpoint(const std::string& path, const MetaTrainState& state) {
  std::ofstream os = open_out(path);
  os << kMagic << ' ' << kVersion << '\n' << "algo meta\n";
  write_config(os, state.config);
  os << "step " << state.step << '\n';
  write_params(os, "theta", state.theta);
  write_params(os, "phi", state.critic->params);
  write_adam(os, "theta", state.opt_theta);
  write_adam(os, "phi", state.opt_phi);
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

MetaTrainState load_checkpoint(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string algo = read_kv<std::string>(is, "algo");
  if (algo != "meta") throw std::runtime_error("checkpoint holds a '" + algo + "' model");
  MetaConfig cfg = read_config(is);
  MetaTrainState state = MetaTrainState::make(cfg);
  state.step = read_kv<long>(is, "step");
  read_params(is, "theta", state.theta);
  read_params(is, "phi", state.critic->params);
  read_adam(is, "theta", state.opt_theta);
  read_adam(is, "phi", state.opt_phi);
  return state;
}

void save_fomaml_checkpoint(const std::string& path, const FomamlState& state) {
  std::ofstream os = open_out(path);
  os << kMagic << ' ' << kVersion << '\n' << "algo fomaml\n";
  write_config(os, state.config);
  os << "step " << state.step << '\n';
  write_params(os, "theta", state.theta);
  write_adam(os, "theta", state.opt);
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

FomamlState load_fomaml_checkpoint(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string algo = read_kv<std::string>(is, "algo");
  if (algo != "fomaml") throw std::runtime_error("checkpoint holds a '" + algo + "' model");
  MetaConfig cfg = read_config(is);
  FomamlState state = FomamlState::make(cfg);
  state.step = read_kv<long>(is, "step");
  read_params(is, "theta", state.theta);
  read_adam(is, "theta", state.opt);
  return state;
}

std::string checkpoint_algo(const std::string& path) {
  std::ifstream is = open_in(path);
  return read_kv<std::string>(is, "algo");
}

}  // namespace fenlo
