#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fenlo/optim.hpp"
#include "fenlo/rng.hpp"
#include "fenlo/tensor.hpp"

namespace fenlo {

enum class CriticKind { joint, bilinear, tabular };

struct CriticConfig {
  CriticKind kind = CriticKind::joint;
  int dx = 1, dy = 1;
  std::vector<int> hidden = {512, 512};
  double tau = 10.0;       // bilinear initial temperature
  int embed_dim = 512;     // bilinear sphere dimension p
  int u_hidden = 128;      // bilinear u-head width
  int alphabet_x = 0, alphabet_y = 0;  // tabular
};

struct ScoreBatch {
  Tensor G;  // K x K, G[i][j] = g(x_i, y_j)
  Tensor U;  // length K, U[i] = u(x_i, y_i)
};

/// Paired scores for single-shuffled-negative training: one negative
/// (x_i, y_{perm(i)}) per positive.
struct PairScores {
  Tensor g_pos;  // length K
  Tensor g_neg;  // length K
  Tensor U;      // length K
};

using Leaves = std::map<std::string, Tensor>;

class Critic {
 public:
  virtual ~Critic() = default;

  virtual ScoreBatch score_matrix(Tape& tape, const Leaves& leaves,
                                  const Tensor& X, const Tensor& Y) const = 0;
  virtual PairScores score_pairs(Tape& tape, const Leaves& leaves,
                                 const Tensor& X, const Tensor& Y,
                                 const std::vector<int>& neg_perm) const = 0;

  /// Convenience: forward with fresh leaves on a throwaway tape.
  ScoreBatch score_matrix_detached(const Tensor& X, const Tensor& Y) const;

  ParamStore params;
  CriticConfig config;
};

class JointCritic : public Critic {
 public:
  JointCritic(const CriticConfig& cfg, Rng& rng);
  ScoreBatch score_matrix(Tape&, const Leaves&, const Tensor&, const Tensor&) const override;
  PairScores score_pairs(Tape&, const Leaves&, const Tensor&, const Tensor&,
                         const std::vector<int>&) const override;

 private:
  struct Heads {
    Tensor u, g;  // n x 1 each
  };
  Heads trunk(const Leaves& leaves, const Tensor& z) const;
  int n_hidden_;
};

class BilinearCritic : public Critic {
 public:
  BilinearCritic(const CriticConfig& cfg, Rng& rng);
  ScoreBatch score_matrix(Tape&, const Leaves&, const Tensor&, const Tensor&) const override;
  PairScores score_pairs(Tape&, const Leaves&, const Tensor&, const Tensor&,
                         const std::vector<int>&) const override;

  /// Unit-sphere embeddings of a batch.
  Tensor embed_x(const Leaves& leaves, const Tensor& X) const;
  Tensor embed_y(const Leaves& leaves, const Tensor& Y) const;

 private:
  Tensor u_head(const Leaves& leaves, const Tensor& hx, const Tensor& hy) const;
  int n_enc_layers_;
};

class TabularCritic : public Critic {
 public:
  TabularCritic(const CriticConfig& cfg);
  ScoreBatch score_matrix(Tape&, const Leaves&, const Tensor&, const Tensor&) const override;
  PairScores score_pairs(Tape&, const Leaves&, const Tensor&, const Tensor&,
                         const std::vector<int>&) const override;

  void set_tables(const std::vector<double>& g_table, const std::vector<double>& u_table);
};

std::unique_ptr<Critic> make_critic(const CriticConfig& cfg, Rng& rng);

/// Symbol indices from a K x 1 tensor of integral doubles.
std::vector<int> symbol_indices(const Tensor& t, int alphabet);

}  // namespace fenlo
