#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fenlo/critics.hpp"
#include "fenlo/estimators.hpp"
#include "fenlo/optim.hpp"
#include "fenlo/rng.hpp"
#include "fenlo/tensor.hpp"

namespace fenlo {

/// Sine regression task y = kappa * sin(x - gamma).
struct SineTask {
  SineTask(double kappa_, double gamma_);
  double eval(double x) const;
  double kappa;
  double gamma;
};

SineTask sample_task(Rng& rng);  // kappa ~ U[0.1,5], gamma ~ U[0,pi]

/// Parallel x/y arrays for a support or query set.
struct Pairs {
  std::vector<double> x, y;
  int size() const { return static_cast<int>(x.size()); }
};

struct Episode {
  Pairs support;
  Pairs query;
  SineTask task;
};

/// Support and query are sampled disjointly; x ~ U[-5,5], y noise-free.
Episode sample_episode(const SineTask& task, int m, int q, Rng& rng);

enum class PromptBackend { mlp, attention };
enum class FloInput { embedding, raw };

PromptBackend backend_from_name(const std::string& name);
std::string backend_name(PromptBackend backend);

struct MetaConfig {
  PromptBackend backend = PromptBackend::mlp;
  int m = 3, q = 2;
  int episode_size = 64;
  int d_xi = 8;   // noise dimension
  int d_e = 40;   // task/data embedding dimension
  std::vector<int> hidden = {512, 512};     // predictor + mlp-backend encoder
  int attn_dim = 64, attn_ff = 128;         // attention-backend widths
  std::vector<int> critic_hidden = {128, 128};
  int critic_embed = 64;
  double lambda = 1e-2;
  double lr = 1e-4;
  double eps_clip = 1e-6;
  double inner_lr = 1e-4;  // FOMAML
  FloInput flo_input = FloInput::embedding;
  uint64_t seed = 0;

  void validate() const;
};

/// Stochastic prompt encoder: (support set, noise xi) -> embedding in R^{d_e}.
/// The mlp backend consumes supports sorted ascending by x concatenated with
/// xi; the attention backend pools [x, y, xi] tokens through one
/// self-attention block and reads out a learned cls token, so it is
/// permutation-invariant over the support.
class PromptEncoder {
 public:
  explicit PromptEncoder(const MetaConfig& cfg);

  void init(ParamStore& params, Rng& rng) const;

  /// One embedding row per support. `noise` is row-major n x d_xi; empty
  /// means all-zero noise (the data-embedding forward pass).
  Tensor encode(const Leaves& leaves, const std::vector<const Pairs*>& supports,
                const std::vector<double>& noise) const;

  /// Single-support conveniences.
  Tensor encode_one(const Leaves& leaves, const Pairs& support,
                    const std::vector<double>& xi) const;
  Tensor encode_one_data(const Leaves& leaves, const Pairs& support) const;

 private:
  Tensor encode_mlp(const Leaves& leaves, const std::vector<const Pairs*>& supports,
                    const std::vector<double>& noise) const;
  Tensor encode_attention(const Leaves& leaves, const std::vector<const Pairs*>& supports,
                          const std::vector<double>& noise) const;
  MetaConfig cfg_;
};

/// RBF kernel mean embedding of the support evaluated at fixed reference
/// points: component j = (1/m) sum_k exp(-||z_ref_j - z_k||^2 / (2 sigma^2))
/// over support points z_k = (x_k, y_k).
std::vector<double> rkhs_embed(const Pairs& support, double sigma,
                               const std::vector<std::vector<double>>& z_ref);

/// Raised when a meta or FLO update produces a non-finite loss.
struct MetaAbort : std::runtime_error {
  MetaAbort(std::string stage_, long step_, const std::string& what_)
      : std::runtime_error(what_), stage(std::move(stage_)), step(step_) {}
  std::string stage;  // "meta", "flo", or "fomaml"
  long step;
};

/// Meta parameters theta (predictor "pred.*" + prompt encoder "prompt.*")
/// and FLO critic parameters phi live in disjoint stores; the meta update
/// never touches phi and the FLO update never touches theta.
struct MetaTrainState {
  MetaConfig config;
  PromptEncoder encoder;
  ParamStore theta;
  std::unique_ptr<Critic> critic;  // phi = critic->params
  AdamState opt_theta, opt_phi;
  long step = 0;

  static MetaTrainState make(const MetaConfig& cfg);
};

struct MetaStepStats {
  double loss_r = 0.0;
  double loss_flo_estimate = 0.0;
  double loss_total = 0.0;
};

/// Theta-pass gradients (left in state.theta grad buffers) without applying
/// an update. Exposed so the lambda=0 equivalence can be checked directly.
MetaStepStats meta_theta_grads(MetaTrainState& state, const std::vector<Episode>& episodes,
                               const std::vector<double>& noise, double lambda);

/// Plain episodic-regression gradients: the same graph restricted to L_R.
double regression_theta_grads(MetaTrainState& state, const std::vector<Episode>& episodes,
                              const std::vector<double>& noise);

/// One adversarial alternation: Adam step on theta minimizing
/// L_R + lambda * sqrt(max(L_FLO, eps_clip)), then Adam step on phi
/// maximizing L_FLO with the embeddings held constant. Noise is derived
/// from (config.seed, step), so a reloaded checkpoint resumes identically.
MetaStepStats meta_step(MetaTrainState& state, const std::vector<Episode>& episodes);

/// FOMAML baseline: predictor-only MLP adapted with one inner gradient step.
struct FomamlState {
  MetaConfig config;
  ParamStore theta;  // "pred.*", dims {1, hidden..., 1}
  AdamState opt;
  long step = 0;

  static FomamlState make(const MetaConfig& cfg);
};

/// Per task: one inner step on support MSE, query MSE at the adapted
/// parameters, first-order outer gradient averaged over tasks. Returns the
/// mean query MSE before the outer update.
double fomaml_step(FomamlState& state, const std::vector<Episode>& episodes);

/// Prediction with a single xi draw.
double adapt_predict(const MetaTrainState& state, const Pairs& support,
                     double x_query, Rng& rng);

/// Mean/std over n_samples independent xi draws; std is the sample standard
/// deviation and is 0 by convention when n_samples = 1.
void predict_ensemble(const MetaTrainState& state, const Pairs& support, double x_query,
                      int n_samples, Rng& rng, double& mean, double& stddev);

struct TaskEval {
  int task_id = 0;
  double kappa = 0.0, gamma = 0.0, query_mse = 0.0;
};

struct MetaEvalResult {
  double mean_mse = 0.0;
  std::vector<TaskEval> tasks;
};

/// Fresh tasks from the seed, one seeded xi draw per task; deterministic.
/// Tasks are evaluated in parallel on per-task RNG streams.
MetaEvalResult eval_meta(const MetaTrainState& state, int n_tasks, int m, int q,
                         uint64_t seed);

/// FOMAML counterpart: one inner adaptation step per task, then query MSE.
MetaEvalResult eval_fomaml(const FomamlState& state, int n_tasks, int m, int q,
                           uint64_t seed);

// Versioned textual checkpoints: config, step counter, all named parameters,
// and both optimizer states, at full double precision.
void save_checkpoint(const std::string& path, const MetaTrainState& state);
MetaTrainState load_checkpoint(const std::string& path);
void save_fomaml_checkpoint(const std::string& path, const FomamlState& state);
FomamlState load_fomaml_checkpoint(const std::string& path);

/// Reads only the algo tag ("meta" or "fomaml") from a checkpoint header.
std::string checkpoint_algo(const std::string& path);

}  // namespace fenlo
