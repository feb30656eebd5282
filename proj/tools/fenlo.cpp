// fenlo command-line front end: MI estimator benchmarks, the discrete oracle
// suite, Meta-FLO training/evaluation, and SVG plotting of the emitted CSVs.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "fenlo/csv.hpp"
#include "fenlo/discrete.hpp"
#include "fenlo/estimators.hpp"
#include "fenlo/gaussian.hpp"
#include "fenlo/meta.hpp"
#include "fenlo/svg.hpp"

namespace {

using namespace fenlo;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
  } else {
    write_text_file(out_path, content);
  }
}

// Wall-clock columns default to 0 so repeated seeded runs are byte-identical;
// --timing opts into real measurements.
void scrub_timing(std::vector<MetricRecord>& rows, bool timing) {
  if (timing) return;
  for (MetricRecord& r : rows) r.wall_ms = 0.0;
}

NegativeStrategy resolve_negatives(const std::string& mode, CriticKind critic,
                                   EstimatorKind kind) {
  if (mode == "full") return NegativeStrategy::full;
  if (mode == "shuffle") return NegativeStrategy::shuffle;
  if (mode != "auto") throw CLI::ValidationError("--negatives must be auto, full, or shuffle");
  // Joint critics score every (x, y) pair through the trunk, so full K x K
  // training is quadratic in K; FLO trains unbiasedly on one shuffled
  // negative per positive instead.
  if (critic == CriticKind::joint && kind == EstimatorKind::FLO) {
    return NegativeStrategy::shuffle;
  }
  return NegativeStrategy::full;
}

CriticKind critic_from_name(const std::string& name) {
  if (name == "joint") return CriticKind::joint;
  if (name == "bilinear") return CriticKind::bilinear;
  throw CLI::ValidationError("--critic must be joint or bilinear");
}

// ---------------------------------------------------------------------------
// mi gaussian

struct GaussianArgs {
  std::string kind = "flo";
  int d = 2;
  double rho = 0.5;
  int k = 128;
  int steps = 5000;
  double lr = 1e-4;
  uint64_t seed = 0;
  std::string critic = "joint";
  std::string negatives = "auto";
  int log_interval = 500;
  int eval_n = 1280;
  int eval_n_final = 10000;
  double ema_decay = 0.99;
  std::string out;
  bool timing = false;
};

int cmd_mi_gaussian(const GaussianArgs& a) {
  EstimatorKind kind = kind_from_name(a.kind);
  GaussianSpec spec{a.d, a.rho};
  spec.validate();
  CriticKind ck = critic_from_name(a.critic);
  NegativeStrategy neg = resolve_negatives(a.negatives, ck, kind);

  Rng rng(a.seed);
  CriticConfig cc;
  cc.kind = ck;
  cc.dx = a.d;
  cc.dy = a.d;
  Rng critic_rng = rng.split(0);
  auto critic = make_critic(cc, critic_rng);
  GaussianSampler sampler(spec);

  TrainOptions topts;
  topts.kind = kind;
  topts.steps = a.steps;
  topts.batch_k = a.k;
  topts.lr = a.lr;
  topts.log_interval = a.log_interval;
  topts.eval_n = a.eval_n;
  topts.eval_n_final = a.eval_n_final;
  topts.negatives = neg;
  topts.seed = rng.split(1).seed();
  topts.ema_decay = a.ema_decay;
  topts.truth = ground_truth_mi(spec);

  TrainResult result = train_estimator(sampler, *critic, topts);
  scrub_timing(result.trace, a.timing);

  ConfigEcho echo = {
      {"command", "mi gaussian"},
      {"kind", a.kind},
      {"d", std::to_string(a.d)},
      {"rho", format_double(a.rho)},
      {"k", std::to_string(a.k)},
      {"steps", std::to_string(a.steps)},
      {"lr", format_double(a.lr)},
      {"seed", std::to_string(a.seed)},
      {"critic", a.critic},
      {"negatives", neg == NegativeStrategy::full ? "full" : "shuffle"},
      {"log_interval", std::to_string(a.log_interval)},
      {"eval_n", std::to_string(a.eval_n)},
      {"eval_n_final", std::to_string(a.eval_n_final)},
      {"ema_decay", format_double(a.ema_decay)},
      {"truth_nats", format_double(topts.truth)},
  };
  emit(a.out, csv_mi_trace(echo, result.trace));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mi sweep

struct SweepArgs {
  std::vector<double> rho = {0.0, 0.3, 0.5, 0.7, 0.9};
  std::vector<std::string> kinds;
  int d = 2;
  int k = 128;
  int steps = 5000;
  int trials = 3;
  double lr = 1e-4;
  uint64_t seed = 0;
  std::string critic = "bilinear";
  std::string negatives = "auto";
  int eval_n_final = 10000;
  std::string out;
  bool timing = false;
};

int cmd_mi_sweep(const SweepArgs& a) {
  SweepOptions opts;
  opts.rho_grid = a.rho;
  opts.d = a.d;
  opts.batch_k = a.k;
  opts.steps = a.steps;
  opts.trials = a.trials;
  opts.lr = a.lr;
  opts.seed = a.seed;
  opts.critic = critic_from_name(a.critic);
  opts.eval_n_final = a.eval_n_final;
  if (!a.kinds.empty()) {
    opts.kinds.clear();
    for (const std::string& name : a.kinds) opts.kinds.push_back(kind_from_name(name));
  }
  for (double rho : opts.rho_grid) GaussianSpec{a.d, rho}.validate();
  if (a.negatives == "full" || a.negatives == "shuffle") {
    opts.negatives = a.negatives == "full" ? NegativeStrategy::full : NegativeStrategy::shuffle;
  } else if (a.negatives != "auto") {
    throw CLI::ValidationError("--negatives must be auto, full, or shuffle");
  } else {
    opts.negatives = opts.critic == CriticKind::joint ? NegativeStrategy::shuffle
                                                      : NegativeStrategy::full;
  }

  std::vector<MetricRecord> rows = run_sweep(opts);
  scrub_timing(rows, a.timing);

  std::string kinds_str, rho_str;
  for (EstimatorKind k : opts.kinds) kinds_str += (kinds_str.empty() ? "" : " ") + kind_name(k);
  for (double r : opts.rho_grid) rho_str += (rho_str.empty() ? "" : " ") + format_double(r);
  ConfigEcho echo = {
      {"command", "mi sweep"},
      {"rho", rho_str},
      {"kinds", kinds_str},
      {"d", std::to_string(a.d)},
      {"k", std::to_string(a.k)},
      {"steps", std::to_string(a.steps)},
      {"trials", std::to_string(a.trials)},
      {"lr", format_double(a.lr)},
      {"seed", std::to_string(a.seed)},
      {"critic", a.critic},
      {"negatives", opts.negatives == NegativeStrategy::full ? "full" : "shuffle"},
      {"eval_n_final", std::to_string(a.eval_n_final)},
  };
  emit(a.out, csv_mi_sweep(echo, rows));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle

Table read_table_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open table file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof()) throw std::runtime_error("malformed table row: " + line);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("table file has no rows: " + path);
  Table t(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw std::runtime_error("table rows must have equal length");
    }
    for (size_t j = 0; j < rows[i].size(); ++j) t.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  }
  return t;
}

int cmd_oracle(const std::string& table_path, uint64_t seed, int n_random) {
  struct Case {
    std::string name;
    DiscreteJoint joint;
  };
  std::vector<Case> cases;
  Table builtin(2, 2);
  builtin.at(0, 0) = 0.4;
  builtin.at(0, 1) = 0.1;
  builtin.at(1, 0) = 0.1;
  builtin.at(1, 1) = 0.4;
  cases.push_back({"builtin-2x2", DiscreteJoint(builtin)});
  cases.push_back({"independent-2x2", DiscreteJoint::independent({0.5, 0.5}, {0.5, 0.5})});
  Rng rng(seed);
  for (int i = 0; i < n_random; ++i) {
    Rng r = rng.split(i);
    cases.push_back({"random-3x4-" + std::to_string(i), DiscreteJoint::random(3, 4, r)});
  }
  if (!table_path.empty()) {
    cases.push_back({"user-table", DiscreteJoint(read_table_file(table_path))});
  }

  double worst = 0.0;
  std::cout.precision(12);
  for (const Case& c : cases) {
    double mi = exact_mi(c.joint);
    OptimalCritics oc = optimal_critics(c.joint);
    double flo = exact_flo(c.joint, oc.g, oc.u);
    double uba = exact_uba(c.joint, oc.g).value;
    double mean_neg_u = 0.0;
    for (int x = 0; x < c.joint.nx(); ++x) {
      for (int y = 0; y < c.joint.ny(); ++y) {
        mean_neg_u += c.joint.p().at(x, y) * (-oc.u.at(x, y));
      }
    }
    double dev = std::max({std::abs(flo - mi), std::abs(uba - mi), std::abs(mean_neg_u - mi)});
    worst = std::max(worst, dev);
    std::cout << c.name << ": mi=" << mi << " flo_at_optimum=" << flo
              << " uba_at_optimum=" << uba << " mean_neg_u=" << mean_neg_u
              << " max_deviation=" << dev << "\n";
  }
  std::cout << "overall max deviation: " << worst << "\n";
  std::cout << (worst < 1e-9 ? "oracle: PASS" : "oracle: FAIL") << "\n";
  return worst < 1e-9 ? kExitOk : kExitConfig;
}

// ---------------------------------------------------------------------------
// meta train / eval

struct MetaTrainArgs {
  int steps = 20000;
  std::string backend = "mlp";
  int m = 3, q = 2;
  int episode_size = 64;
  int d_xi = 8, d_e = 40;
  double lambda = 1e-2;
  double lr = 1e-4;
  double inner_lr = 1e-4;
  double eps_clip = 1e-6;
  uint64_t seed = 0;
  std::string flo_input = "embedding";
  std::string baseline;  // "" or "fomaml"
  std::string checkpoint = "fenlo_meta.ckpt";
  std::string out;
  int log_interval = 100;
  bool assert_lambda0 = false;
  bool timing = false;
};

MetaConfig meta_config_from(const MetaTrainArgs& a) {
  MetaConfig cfg;
  cfg.backend = backend_from_name(a.backend);
  cfg.m = a.m;
  cfg.q = a.q;
  cfg.episode_size = a.episode_size;
  cfg.d_xi = a.d_xi;
  cfg.d_e = a.d_e;
  cfg.lambda = a.lambda;
  cfg.lr = a.lr;
  cfg.inner_lr = a.inner_lr;
  cfg.eps_clip = a.eps_clip;
  cfg.seed = a.seed;
  if (a.flo_input == "raw") {
    cfg.flo_input = FloInput::raw;
  } else if (a.flo_input == "embedding") {
    cfg.flo_input = FloInput::embedding;
  } else {
    throw CLI::ValidationError("--flo-input must be embedding or raw");
  }
  cfg.validate();
  return cfg;
}

std::vector<Episode> sample_episode_batch(const MetaConfig& cfg, long step) {
  Rng rng = Rng(cfg.seed).split(2 * static_cast<uint64_t>(step));
  std::vector<Episode> episodes;
  episodes.reserve(cfg.episode_size);
  for (int i = 0; i < cfg.episode_size; ++i) {
    SineTask task = sample_task(rng);
    episodes.push_back(sample_episode(task, cfg.m, cfg.q, rng));
  }
  return episodes;
}

int assert_lambda0(MetaTrainState& state) {
  std::vector<Episode> episodes = sample_episode_batch(state.config, 0);
  int n_e = static_cast<int>(episodes.size());
  Rng nrng = Rng(state.config.seed).split(1);
  std::vector<double> noise(static_cast<size_t>(n_e) * state.config.d_xi);
  for (double& v : noise) v = nrng.normal();

  meta_theta_grads(state, episodes, noise, 0.0);
  std::map<std::string, std::vector<double>> meta_grads;
  for (const auto& [name, p] : state.theta) meta_grads[name] = p.grad;
  regression_theta_grads(state, episodes, noise);

  double worst = 0.0;
  for (const auto& [name, p] : state.theta) {
    const auto& mg = meta_grads[name];
    for (size_t i = 0; i < p.grad.size(); ++i) {
      worst = std::max(worst, std::abs(p.grad[i] - mg[i]));
    }
  }
  std::cout << "lambda0 gradient equivalence: max |diff| = " << worst << " -> "
            << (worst <= 1e-12 ? "PASS" : "FAIL") << "\n";
  return worst <= 1e-12 ? kExitOk : kExitConfig;
}

ConfigEcho meta_echo(const MetaTrainArgs& a, const char* command) {
  return {
      {"command", command},
      {"baseline", a.baseline.empty() ? "none" : a.baseline},
      {"backend", a.backend},
      {"steps", std::to_string(a.steps)},
      {"m", std::to_string(a.m)},
      {"q", std::to_string(a.q)},
      {"episode_size", std::to_string(a.episode_size)},
      {"d_xi", std::to_string(a.d_xi)},
      {"d_e", std::to_string(a.d_e)},
      {"lambda", format_double(a.lambda)},
      {"lr", format_double(a.lr)},
      {"inner_lr", format_double(a.inner_lr)},
      {"eps_clip", format_double(a.eps_clip)},
      {"flo_input", a.flo_input},
      {"seed", std::to_string(a.seed)},
      {"log_interval", std::to_string(a.log_interval)},
      {"checkpoint", a.checkpoint},
  };
}

int cmd_meta_train(const MetaTrainArgs& a) {
  if (!a.baseline.empty() && a.baseline != "fomaml") {
    throw CLI::ValidationError("--baseline must be fomaml when given");
  }
  MetaConfig cfg = meta_config_from(a);
  std::vector<MetaTrainRow> rows;
  auto wall = [&](auto t0) {
    if (!a.timing) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  if (a.baseline == "fomaml") {
    FomamlState state = FomamlState::make(cfg);
    for (int step = 0; step < a.steps; ++step) {
      std::vector<Episode> episodes = sample_episode_batch(cfg, state.step);
      auto t0 = std::chrono::steady_clock::now();
      double q_loss = fomaml_step(state, episodes);
      if ((step + 1) % a.log_interval == 0 || step + 1 == a.steps) {
        rows.push_back({state.step, q_loss, q_loss, 0.0, wall(t0)});
      }
    }
    save_fomaml_checkpoint(a.checkpoint, state);
  } else {
    MetaTrainState state = MetaTrainState::make(cfg);
    if (a.assert_lambda0) return assert_lambda0(state);
    for (int step = 0; step < a.steps; ++step) {
      std::vector<Episode> episodes = sample_episode_batch(cfg, state.step);
      auto t0 = std::chrono::steady_clock::now();
      MetaStepStats stats = meta_step(state, episodes);
      if ((step + 1) % a.log_interval == 0 || step + 1 == a.steps) {
        rows.push_back({state.step, stats.loss_total, stats.loss_r, stats.loss_flo_estimate,
                        wall(t0)});
      }
    }
    save_checkpoint(a.checkpoint, state);
  }
  emit(a.out, csv_meta_train(meta_echo(a, "meta train"), rows));
  return kExitOk;
}

struct MetaEvalArgs {
  std::string checkpoint;
  int tasks = 100;
  int m = -1, q = -1;  // -1: take from the checkpoint config
  uint64_t seed = 1000;
  std::string out;
  std::string adapt_out;
  int adapt_task = 0;
};

std::vector<AdaptRow> adaptation_rows(const MetaTrainState& state, int m, int q,
                                      uint64_t seed, int task_id) {
  Rng rng = Rng(seed).split(task_id);
  SineTask task = sample_task(rng);
  Episode ep = sample_episode(task, m, q, rng);
  std::vector<double> xi(state.config.d_xi);
  for (double& v : xi) v = rng.normal();

  Tape tape;
  Leaves th = state.theta.leaves(tape);
  Tensor e = state.encoder.encode_one(th, ep.support, xi);
  auto predict = [&](const std::vector<double>& xs) {
    int n = static_cast<int>(xs.size());
    Tensor input = concat_cols(make_tensor({n, 1}, xs), tile_rows_outer(e, n));
    Tensor pred = mlp_forward(th, "pred",
                              static_cast<int>(state.config.hidden.size()) + 1, input);
    return *pred.data;
  };

  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i) grid.push_back(-5.0 + 10.0 * i / 200.0);
  std::vector<double> grid_pred = predict(grid);
  std::vector<double> support_pred = predict(ep.support.x);

  std::vector<AdaptRow> rows;
  for (size_t i = 0; i < grid.size(); ++i) {
    rows.push_back({grid[i], task.eval(grid[i]), grid_pred[i], 0});
  }
  for (int k = 0; k < m; ++k) {
    rows.push_back({ep.support.x[k], ep.support.y[k], support_pred[k], 1});
  }
  return rows;
}

int cmd_meta_eval(const MetaEvalArgs& a) {
  if (a.checkpoint.empty()) throw CLI::ValidationError("--checkpoint is required");
  std::string algo = checkpoint_algo(a.checkpoint);

  MetaEvalResult result;
  MetaConfig cfg;
  if (algo == "meta") {
    MetaTrainState state = load_checkpoint(a.checkpoint);
    cfg = state.config;
    int m = a.m > 0 ? a.m : cfg.m;
    int q = a.q > 0 ? a.q : cfg.q;
    result = eval_meta(state, a.tasks, m, q, a.seed);
    if (!a.adapt_out.empty()) {
      ConfigEcho echo = {{"command", "meta eval adaptation"},
                         {"checkpoint", a.checkpoint},
                         {"task", std::to_string(a.adapt_task)},
                         {"seed", std::to_string(a.seed)}};
      write_text_file(a.adapt_out,
                      csv_adaptation(echo, adaptation_rows(state, m, q, a.seed, a.adapt_task)));
    }
  } else {
    if (!a.adapt_out.empty()) {
      throw std::runtime_error("adaptation output requires a meta checkpoint");
    }
    FomamlState state = load_fomaml_checkpoint(a.checkpoint);
    cfg = state.config;
    int m = a.m > 0 ? a.m : cfg.m;
    int q = a.q > 0 ? a.q : cfg.q;
    result = eval_fomaml(state, a.tasks, m, q, a.seed);
  }

  ConfigEcho echo = {
      {"command", "meta eval"},
      {"checkpoint", a.checkpoint},
      {"algo", algo},
      {"tasks", std::to_string(a.tasks)},
      {"m", std::to_string(a.m > 0 ? a.m : cfg.m)},
      {"q", std::to_string(a.q > 0 ? a.q : cfg.q)},
      {"seed", std::to_string(a.seed)},
      {"mean_query_mse", format_double(result.mean_mse)},
  };
  emit(a.out, csv_meta_eval(echo, result.tasks));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plot

struct PlotArgs {
  std::string input;
  std::string out;
  std::string kind = "trace";
  std::string title;
};

PlotSpec plot_trace(const CsvData& data, const std::string& title) {
  int c_step = column_index(data, "step");
  int c_kind = column_index(data, "kind");
  int c_est = column_index(data, "estimate_nats");
  int c_truth = column_index(data, "truth_nats");
  if (data.rows.empty()) throw std::runtime_error("no rows");
  PlotSpec spec;
  spec.title = title.empty() ? "MI estimate trace" : title;
  spec.x_label = "step";
  spec.y_label = "MI (nats)";
  std::vector<std::string> order;
  std::map<std::string, Series> by_kind;
  for (size_t i = 0; i < data.rows.size(); ++i) {
    const std::string& kind = data.rows[i][c_kind];
    if (!by_kind.count(kind)) {
      order.push_back(kind);
      by_kind[kind].label = kind;
    }
    by_kind[kind].x.push_back(cell_double(data, i, c_step));
    by_kind[kind].y.push_back(cell_double(data, i, c_est));
  }
  for (const std::string& kind : order) spec.lines.push_back(by_kind[kind]);
  spec.truth = cell_double(data, 0, c_truth);
  return spec;
}

PlotSpec plot_quantile_band(const CsvData& data, const std::string& title) {
  int c_rho = column_index(data, "rho");
  int c_kind = column_index(data, "kind");
  int c_est = column_index(data, "estimate_nats");
  int c_q10 = column_index(data, "q10");
  int c_q90 = column_index(data, "q90");
  int c_truth = column_index(data, "truth_nats");
  int c_failed = column_index(data, "failed");
  if (data.rows.empty()) throw std::runtime_error("no rows");

  struct Agg {
    double est = 0, lo = 0, hi = 0;
    int n = 0;
  };
  std::map<std::string, std::map<double, Agg>> cells;
  std::map<double, double> truth_by_rho;
  std::vector<std::string> order;
  for (size_t i = 0; i < data.rows.size(); ++i) {
    if (data.rows[i][c_failed] == "1") continue;
    const std::string& kind = data.rows[i][c_kind];
    double rho = cell_double(data, i, c_rho);
    if (!cells.count(kind)) order.push_back(kind);
    Agg& a = cells[kind][rho];
    a.est += cell_double(data, i, c_est);
    a.lo += cell_double(data, i, c_q10);
    a.hi += cell_double(data, i, c_q90);
    a.n += 1;
    truth_by_rho[rho] = cell_double(data, i, c_truth);
  }
  if (cells.empty()) throw std::runtime_error("no rows");

  PlotSpec spec;
  spec.title = title.empty() ? "MI estimates vs correlation" : title;
  spec.x_label = "rho";
  spec.y_label = "MI (nats)";
  for (const std::string& kind : order) {
    Series line;
    line.label = kind;
    Band band;
    band.label = kind + " q10-q90";
    for (const auto& [rho, agg] : cells[kind]) {
      line.x.push_back(rho);
      line.y.push_back(agg.est / agg.n);
      band.x.push_back(rho);
      band.lo.push_back(agg.lo / agg.n);
      band.hi.push_back(agg.hi / agg.n);
    }
    spec.lines.push_back(std::move(line));
    spec.bands.push_back(std::move(band));
  }
  Series truth;
  truth.label = "truth";
  truth.dashed = true;
  for (const auto& [rho, t] : truth_by_rho) {
    truth.x.push_back(rho);
    truth.y.push_back(t);
  }
  spec.lines.push_back(std::move(truth));
  return spec;
}

PlotSpec plot_adaptation(const CsvData& data, const std::string& title) {
  int c_x = column_index(data, "x");
  int c_true = column_index(data, "y_true");
  int c_pred = column_index(data, "y_pred");
  int c_sup = column_index(data, "is_support");
  if (data.rows.empty()) throw std::runtime_error("no rows");
  PlotSpec spec;
  spec.title = title.empty() ? "Few-shot adaptation" : title;
  spec.x_label = "x";
  spec.y_label = "y";
  Series truth{"true sine"}, model{"model"}, support{"support"};
  support.markers = true;
  for (size_t i = 0; i < data.rows.size(); ++i) {
    if (data.rows[i][c_sup] == "1") {
      support.x.push_back(cell_double(data, i, c_x));
      support.y.push_back(cell_double(data, i, c_true));
    } else {
      truth.x.push_back(cell_double(data, i, c_x));
      truth.y.push_back(cell_double(data, i, c_true));
      model.x.push_back(cell_double(data, i, c_x));
      model.y.push_back(cell_double(data, i, c_pred));
    }
  }
  spec.lines = {std::move(truth), std::move(model), std::move(support)};
  return spec;
}

int cmd_plot(const PlotArgs& a) {
  CsvData data = read_csv(a.input);
  PlotSpec spec;
  if (a.kind == "trace") {
    spec = plot_trace(data, a.title);
  } else if (a.kind == "quantile-band") {
    spec = plot_quantile_band(data, a.title);
  } else if (a.kind == "adaptation") {
    spec = plot_adaptation(data, a.title);
  } else {
    throw CLI::ValidationError("--kind must be trace, quantile-band, or adaptation");
  }
  emit(a.out, render_svg(spec));
  return kExitOk;
}

// CLI11 only processes config files attached to the root app, so each
// subcommand takes --config as a plain option and the file is applied by hand
// after parsing: file values fill in options the command line left untouched,
// which is exactly the flags-override contract.
CLI::Option* attach_config(CLI::App* cmd, std::string& path) {
  return cmd->add_option("--config", path,
                         "flat `key = value` config file; flags override");
}

void apply_config(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  for (const CLI::ConfigItem& item : CLI::ConfigINI{}.from_file(path)) {
    CLI::Option* op =
        item.parents.empty() ? cmd->get_option_no_throw("--" + item.name) : nullptr;
    if (op == nullptr || op->get_name() == "--config") {
      throw std::runtime_error("config: unknown key '" + item.fullname() + "'");
    }
    if (op->count() > 0) continue;  // command-line flags win
    for (const std::string& input : item.inputs) op->add_result(input);
    op->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FLO mutual-information estimators and Meta-FLO meta-learning"};
  app.require_subcommand(1);

  auto* mi = app.add_subcommand("mi", "Mutual-information benchmarks");
  mi->require_subcommand(1);

  GaussianArgs ga;
  auto* gaussian = mi->add_subcommand("gaussian", "Train one estimator on the Gaussian pair");
  gaussian->add_option("--kind", ga.kind, "estimator: flo fdv infonce nwj tuba dv mine");
  gaussian->add_option("--d", ga.d, "dimensions per side");
  gaussian->add_option("--rho", ga.rho, "per-coordinate correlation");
  gaussian->add_option("--k", ga.k, "contrastive batch size K");
  gaussian->add_option("--steps", ga.steps, "Adam steps");
  gaussian->add_option("--lr", ga.lr, "learning rate");
  gaussian->add_option("--seed", ga.seed, "RNG seed");
  gaussian->add_option("--critic", ga.critic, "critic: joint or bilinear");
  gaussian->add_option("--negatives", ga.negatives, "negative strategy: auto, full, shuffle");
  gaussian->add_option("--log-interval", ga.log_interval, "steps between trace rows");
  gaussian->add_option("--eval-n", ga.eval_n, "samples per interval evaluation");
  gaussian->add_option("--eval-n-final", ga.eval_n_final, "samples for the final evaluation");
  gaussian->add_option("--ema-decay", ga.ema_decay, "MINE EMA decay");
  gaussian->add_option("--out", ga.out, "CSV output path (default stdout)");
  gaussian->add_flag("--timing", ga.timing, "emit real wall-clock columns");
  std::string gaussian_cfg;
  attach_config(gaussian, gaussian_cfg);

  SweepArgs sa;
  auto* sweep = mi->add_subcommand("sweep", "Grid of (rho, estimator, trial) cells");
  sweep->add_option("--rho", sa.rho, "correlation grid");
  sweep->add_option("--kinds", sa.kinds, "estimator kinds (default: all)");
  sweep->add_option("--d", sa.d, "dimensions per side");
  sweep->add_option("--k", sa.k, "contrastive batch size K");
  sweep->add_option("--steps", sa.steps, "Adam steps per cell");
  sweep->add_option("--trials", sa.trials, "trials per cell");
  sweep->add_option("--lr", sa.lr, "learning rate");
  sweep->add_option("--seed", sa.seed, "RNG seed");
  sweep->add_option("--critic", sa.critic, "critic: joint or bilinear");
  sweep->add_option("--negatives", sa.negatives, "negative strategy: auto, full, shuffle");
  sweep->add_option("--eval-n-final", sa.eval_n_final, "samples for the final evaluation");
  sweep->add_option("--out", sa.out, "CSV output path (default stdout)");
  sweep->add_flag("--timing", sa.timing, "emit real wall-clock columns");
  std::string sweep_cfg;
  attach_config(sweep, sweep_cfg);

  std::string oracle_table;
  uint64_t oracle_seed = 0;
  int oracle_random = 5;
  auto* oracle = app.add_subcommand("oracle", "Exact discrete tightness report");
  oracle->add_option("--table", oracle_table, "joint probability table file (rows of numbers)");
  oracle->add_option("--seed", oracle_seed, "seed for the random joints");
  oracle->add_option("--random", oracle_random, "number of random 3x4 joints");
  std::string oracle_cfg;
  attach_config(oracle, oracle_cfg);

  auto* meta = app.add_subcommand("meta", "Meta-FLO few-shot learning");
  meta->require_subcommand(1);

  MetaTrainArgs ta;
  auto* train = meta->add_subcommand("train", "Train Meta-FLO (or the FOMAML baseline)");
  train->add_option("--steps", ta.steps, "meta steps");
  train->add_option("--backend", ta.backend, "prompt encoder: mlp or attention");
  train->add_option("--m", ta.m, "support size");
  train->add_option("--q", ta.q, "query size");
  train->add_option("--episode-size", ta.episode_size, "tasks per meta step");
  train->add_option("--d-xi", ta.d_xi, "noise dimension");
  train->add_option("--d-e", ta.d_e, "embedding dimension");
  train->add_option("--lambda", ta.lambda, "MI regularization strength");
  train->add_option("--lr", ta.lr, "learning rate (both players)");
  train->add_option("--inner-lr", ta.inner_lr, "FOMAML inner learning rate");
  train->add_option("--eps-clip", ta.eps_clip, "sqrt clamp floor");
  train->add_option("--seed", ta.seed, "RNG seed");
  train->add_option("--flo-input", ta.flo_input, "FLO x-side: embedding or raw");
  train->add_option("--baseline", ta.baseline, "fomaml to train the baseline instead");
  train->add_option("--checkpoint", ta.checkpoint, "checkpoint output path");
  train->add_option("--out", ta.out, "metrics CSV path (default stdout)");
  train->add_option("--log-interval", ta.log_interval, "steps between CSV rows");
  train->add_flag("--assert-lambda0", ta.assert_lambda0,
                  "check the lambda=0 gradient equivalence and exit");
  train->add_flag("--timing", ta.timing, "emit real wall-clock columns");
  std::string train_cfg;
  attach_config(train, train_cfg);

  MetaEvalArgs ea;
  auto* eval = meta->add_subcommand("eval", "Evaluate a checkpoint on fresh tasks");
  eval->add_option("--checkpoint", ea.checkpoint, "checkpoint path")->required();
  eval->add_option("--tasks", ea.tasks, "number of held-out tasks");
  eval->add_option("--m", ea.m, "support size (default: from checkpoint)");
  eval->add_option("--q", ea.q, "query size (default: from checkpoint)");
  eval->add_option("--seed", ea.seed, "evaluation seed");
  eval->add_option("--out", ea.out, "evaluation CSV path (default stdout)");
  eval->add_option("--adapt-out", ea.adapt_out, "adaptation-curve CSV for one task");
  eval->add_option("--adapt-task", ea.adapt_task, "task id for the adaptation curve");
  std::string eval_cfg;
  attach_config(eval, eval_cfg);

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot", "Render a CSV as a standalone SVG");
  plot->add_option("--input", pa.input, "input CSV")->required();
  plot->add_option("--out", pa.out, "output SVG path (default stdout)");
  plot->add_option("--kind", pa.kind, "trace, quantile-band, or adaptation");
  plot->add_option("--title", pa.title, "plot title");
  std::string plot_cfg;
  attach_config(plot, plot_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gaussian->parsed()) {
      apply_config(gaussian, gaussian_cfg);
      return cmd_mi_gaussian(ga);
    }
    if (sweep->parsed()) {
      apply_config(sweep, sweep_cfg);
      return cmd_mi_sweep(sa);
    }
    if (oracle->parsed()) {
      apply_config(oracle, oracle_cfg);
      return cmd_oracle(oracle_table, oracle_seed, oracle_random);
    }
    if (train->parsed()) {
      apply_config(train, train_cfg);
      return cmd_meta_train(ta);
    }
    if (eval->parsed()) {
      apply_config(eval, eval_cfg);
      return cmd_meta_eval(ea);
    }
    if (plot->parsed()) {
      apply_config(plot, plot_cfg);
      return cmd_plot(pa);
    }
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort at step " << e.step << " (" << kind_name(e.kind)
              << "): " << e.what() << "\n";
    return kExitNumeric;
  } catch (const MetaAbort& e) {
    std::cerr << "numeric abort in " << e.stage << " update at step " << e.step << ": "
              << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
