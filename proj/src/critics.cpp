#include "fenlo/critics.hpp"

#include <cmath>
#include <stdexcept>

namespace fenlo {

namespace {

void check_batch(const Tensor& X, const Tensor& Y) {
  if (X.rows() != Y.rows()) throw std::invalid_argument("score_matrix: batch size mismatch");
  if (X.rows() < 2) throw std::invalid_argument("score_matrix: K >= 2 required (no negatives exist)");
}

Tensor diag_mask(int k) {
  std::vector<double> m(static_cast<size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i) m[static_cast<size_t>(i) * k + i] = 1.0;
  return make_tensor({k, k}, std::move(m));
}

Tensor normalize_rows(const Tensor& h) {
  Tensor sq = row_sum(square(h));                 // {n}
  Tensor norm = sqrt_op(clamp_min(sq, 1e-24));    // {n}, column-broadcasts
  return div(h, norm);
}

}  // namespace

ScoreBatch Critic::score_matrix_detached(const Tensor& X, const Tensor& Y) const {
  Tape tape;
  Leaves leaves = params.leaves(tape);
  return score_matrix(tape, leaves, X, Y);
}

// ---------------------------------------------------------------------------
// JointCritic: shared trunk over concat(x, y) with two scalar heads (u, g).

JointCritic::JointCritic(const CriticConfig& cfg, Rng& rng) {
  if (cfg.hidden.empty()) throw std::invalid_argument("joint critic requires a nonempty hidden list");
  if (cfg.dx <= 0 || cfg.dy <= 0) throw std::invalid_argument("critic dims must be positive");
  config = cfg;
  std::vector<int> dims;
  dims.push_back(cfg.dx + cfg.dy);
  for (int h : cfg.hidden) dims.push_back(h);
  n_hidden_ = static_cast<int>(cfg.hidden.size());
  mlp_init(params, "trunk", dims, rng);
  int last = cfg.hidden.back();
  params.add("head_u.w", {last, 1}, glorot_uniform(last, 1, rng));
  params.add("head_u.b", {1, 1}, {0.0});
  params.add("head_g.w", {last, 1}, glorot_uniform(last, 1, rng));
  params.add("head_g.b", {1, 1}, {0.0});
}

JointCritic::Heads JointCritic::trunk(const Leaves& leaves, const Tensor& z) const {
  Tensor h = z;
  for (int l = 0; l < n_hidden_; ++l) {
    h = relu(add(matmul(h, leaves.at("trunk.w" + std::to_string(l))),
                 leaves.at("trunk.b" + std::to_string(l))));
  }
  Heads out;
  out.u = add(matmul(h, leaves.at("head_u.w")), leaves.at("head_u.b"));
  out.g = add(matmul(h, leaves.at("head_g.w")), leaves.at("head_g.b"));
  return out;
}

ScoreBatch JointCritic::score_matrix(Tape& tape, const Leaves& leaves,
                                     const Tensor& X, const Tensor& Y) const {
  (void)tape;
  check_batch(X, Y);
  int k = X.rows();
  Tensor xp = tile_rows_outer(X, k);
  Tensor yp = tile_rows_cycle(Y, k);
  Heads heads = trunk(leaves, concat_cols(xp, yp));
  ScoreBatch out;
  out.G = reshape(heads.g, {k, k});
  Tensor u_mat = reshape(heads.u, {k, k});
  out.U = row_sum(mul(u_mat, diag_mask(k)));
  return out;
}

PairScores JointCritic::score_pairs(Tape& tape, const Leaves& leaves,
                                    const Tensor& X, const Tensor& Y,
                                    const std::vector<int>& neg_perm) const {
  (void)tape;
  check_batch(X, Y);
  int k = X.rows();
  Heads pos = trunk(leaves, concat_cols(X, Y));
  Heads negh = trunk(leaves, concat_cols(X, permute_rows(Y, neg_perm)));
  PairScores out;
  out.g_pos = reshape(pos.g, {k});
  out.g_neg = reshape(negh.g, {k});
  out.U = reshape(pos.u, {k});
  return out;
}

// ---------------------------------------------------------------------------
// BilinearCritic: unit-sphere encoders, trainable temperature via
// exp-reparameterization, MLP u-head over concatenated embeddings.

BilinearCritic::BilinearCritic(const CriticConfig& cfg, Rng& rng) {
  if (cfg.dx <= 0 || cfg.dy <= 0 || cfg.embed_dim <= 0) {
    throw std::invalid_argument("critic dims must be positive");
  }
  if (cfg.tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  config = cfg;
  std::vector<int> dx_dims, dy_dims;
  dx_dims.push_back(cfg.dx);
  dy_dims.push_back(cfg.dy);
  for (int h : cfg.hidden) {
    dx_dims.push_back(h);
    dy_dims.push_back(h);
  }
  dx_dims.push_back(cfg.embed_dim);
  dy_dims.push_back(cfg.embed_dim);
  n_enc_layers_ = static_cast<int>(dx_dims.size()) - 1;
  mlp_init(params, "hx", dx_dims, rng);
  mlp_init(params, "hy", dy_dims, rng);
  mlp_init(params, "uhead", {2 * cfg.embed_dim, cfg.u_hidden, 1}, rng);
  params.add("log_tau", {1}, {std::log(cfg.tau)});
}

Tensor BilinearCritic::embed_x(const Leaves& leaves, const Tensor& X) const {
  return normalize_rows(mlp_forward(leaves, "hx", n_enc_layers_, X));
}

Tensor BilinearCritic::embed_y(const Leaves& leaves, const Tensor& Y) const {
  return normalize_rows(mlp_forward(leaves, "hy", n_enc_layers_, Y));
}

Tensor BilinearCritic::u_head(const Leaves& leaves, const Tensor& hx, const Tensor& hy) const {
  Tensor u = mlp_forward(leaves, "uhead", 2, concat_cols(hx, hy));
  return reshape(u, {u.rows()});
}

ScoreBatch BilinearCritic::score_matrix(Tape& tape, const Leaves& leaves,
                                        const Tensor& X, const Tensor& Y) const {
  (void)tape;
  check_batch(X, Y);
  Tensor hx = embed_x(leaves, X);
  Tensor hy = embed_y(leaves, Y);
  Tensor tau = exp_op(leaves.at("log_tau"));
  ScoreBatch out;
  out.G = mul(matmul(hx, transpose(hy)), tau);
  out.U = u_head(leaves, hx, hy);
  return out;
}

PairScores BilinearCritic::score_pairs(Tape& tape, const Leaves& leaves,
                                       const Tensor& X, const Tensor& Y,
                                       const std::vector<int>& neg_perm) const {
  (void)tape;
  check_batch(X, Y);
  Tensor hx = embed_x(leaves, X);
  Tensor hy = embed_y(leaves, Y);
  Tensor tau = exp_op(leaves.at("log_tau"));
  PairScores out;
  out.g_pos = mul(row_sum(mul(hx, hy)), tau);
  out.g_neg = mul(row_sum(mul(hx, permute_rows(hy, neg_perm))), tau);
  out.U = u_head(leaves, hx, hy);
  return out;
}

// ---------------------------------------------------------------------------
// TabularCritic: exact lookup tables over finite alphabets.

TabularCritic::TabularCritic(const CriticConfig& cfg) {
  if (cfg.alphabet_x <= 0 || cfg.alphabet_y <= 0) {
    throw std::invalid_argument("tabular critic requires positive alphabet sizes");
  }
  config = cfg;
  size_t n = static_cast<size_t>(cfg.alphabet_x) * cfg.alphabet_y;
  params.add("g_table", {cfg.alphabet_x, cfg.alphabet_y}, std::vector<double>(n, 0.0));
  params.add("u_table", {cfg.alphabet_x, cfg.alphabet_y}, std::vector<double>(n, 0.0));
}

void TabularCritic::set_tables(const std::vector<double>& g_table,
                               const std::vector<double>& u_table) {
  auto& g = params.at("g_table");
  auto& u = params.at("u_table");
  if (g_table.size() != g.value.size() || u_table.size() != u.value.size()) {
    throw std::invalid_argument("set_tables: size mismatch with alphabet");
  }
  g.value = g_table;
  u.value = u_table;
}

std::vector<int> symbol_indices(const Tensor& t, int alphabet) {
  std::vector<int> idx(t.numel());
  for (int i = 0; i < t.numel(); ++i) {
    double v = (*t.data)[i];
    int s = static_cast<int>(std::llround(v));
    if (std::abs(v - s) > 1e-9 || s < 0 || s >= alphabet) {
      throw std::invalid_argument("symbol_indices: value is not a valid symbol");
    }
    idx[i] = s;
  }
  return idx;
}

ScoreBatch TabularCritic::score_matrix(Tape& tape, const Leaves& leaves,
                                       const Tensor& X, const Tensor& Y) const {
  (void)tape;
  check_batch(X, Y);
  std::vector<int> ix = symbol_indices(X, config.alphabet_x);
  std::vector<int> iy = symbol_indices(Y, config.alphabet_y);
  ScoreBatch out;
  out.G = gather_pairs(leaves.at("g_table"), ix, iy);
  out.U = gather_diag(leaves.at("u_table"), ix, iy);
  return out;
}

PairScores TabularCritic::score_pairs(Tape& tape, const Leaves& leaves,
                                      const Tensor& X, const Tensor& Y,
                                      const std::vector<int>& neg_perm) const {
  (void)tape;
  check_batch(X, Y);
  std::vector<int> ix = symbol_indices(X, config.alphabet_x);
  std::vector<int> iy = symbol_indices(Y, config.alphabet_y);
  std::vector<int> iyn(iy.size());
  for (size_t i = 0; i < iy.size(); ++i) iyn[i] = iy[neg_perm[i]];
  PairScores out;
  out.g_pos = gather_diag(leaves.at("g_table"), ix, iy);
  out.g_neg = gather_diag(leaves.at("g_table"), ix, iyn);
  out.U = gather_diag(leaves.at("u_table"), ix, iy);
  return out;
}

std::unique_ptr<Critic> make_critic(const CriticConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case CriticKind::joint: return std::make_unique<JointCritic>(cfg, rng);
    case CriticKind::bilinear: return std::make_unique<BilinearCritic>(cfg, rng);
    case CriticKind::tabular: return std::make_unique<TabularCritic>(cfg);
  }
  throw std::invalid_argument("make_critic: unknown kind");
}

}  // namespace fenlo
