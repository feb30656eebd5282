#pragma once

#include <map>
#include <string>
#include <vector>

#include "fenlo/rng.hpp"
#include "fenlo/tensor.hpp"

namespace fenlo {

/// Named trainable parameters. Iteration order is lexicographic, so updates
/// and checkpoints are deterministic.
class ParamStore {
 public:
  struct Param {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // same size as value
  };

  void add(const std::string& name, std::vector<int> shape, std::vector<double> value);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  /// Registers every parameter as a leaf on the tape; returns name -> leaf.
  std::map<std::string, Tensor> leaves(Tape& tape) const;

  /// Pulls accumulated gradients from the tape into each param's grad buffer.
  /// Parameters unreachable from the loss get zero.
  void collect_grads(const Tape& tape, const std::map<std::string, Tensor>& leaves);

  void zero_grads();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }
  size_t value_count() const;

 private:
  std::map<std::string, Param> params_;
};

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::map<std::string, std::vector<double>> m, v;
};

/// Standard Adam update with bias correction, applied to every parameter in
/// the store using its grad buffer.
void adam_step(ParamStore& params, AdamState& state);

/// Glorot-uniform weight init: U(+-sqrt(6/(fan_in+fan_out))).
std::vector<double> glorot_uniform(int fan_in, int fan_out, Rng& rng);

/// Registers an MLP (weights "prefix.w0", biases "prefix.b0", ...) with the
/// given layer dims {in, hidden..., out}.
void mlp_init(ParamStore& params, const std::string& prefix,
              const std::vector<int>& dims, Rng& rng);

/// Forward pass through an MLP registered by mlp_init. ReLU on hidden layers,
/// linear output.
Tensor mlp_forward(const std::map<std::string, Tensor>& leaves,
                   const std::string& prefix, int n_layers, const Tensor& x);

}  // namespace fenlo
