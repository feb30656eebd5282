#include "fenlo/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fenlo {

void ParamStore::add(const std::string& name, std::vector<int> shape, std::vector<double> value) {
  if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  if (n != value.size()) throw std::invalid_argument("ParamStore: shape/value mismatch for " + name);
  Param p;
  p.shape = std::move(shape);
  p.value = std::move(value);
  p.grad.assign(n, 0.0);
  params_.emplace(name, std::move(p));
}

ParamStore::Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

const ParamStore::Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

std::map<std::string, Tensor> ParamStore::leaves(Tape& tape) const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : params_) {
    out.emplace(name, tape.leaf(make_tensor(p.shape, p.value)));
  }
  return out;
}

void ParamStore::collect_grads(const Tape& tape, const std::map<std::string, Tensor>& leaves) {
  for (auto& [name, p] : params_) {
    auto it = leaves.find(name);
    if (it == leaves.end()) throw std::invalid_argument("collect_grads: missing leaf for " + name);
    p.grad = tape.grad(it->second);
  }
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

size_t ParamStore::value_count() const {
  size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void adam_step(ParamStore& params, AdamState& state) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.value.size(), 0.0);
    if (v.empty()) v.assign(p.value.size(), 0.0);
    if (m.size() != p.value.size() || v.size() != p.value.size()) {
      throw std::invalid_argument("adam_step: state misaligned with param " + name);
    }
    for (size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

std::vector<double> glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> w(static_cast<size_t>(fan_in) * fan_out);
  for (double& x : w) x = rng.uniform(-bound, bound);
  return w;
}

void mlp_init(ParamStore& params, const std::string& prefix,
              const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("mlp_init: need at least input and output dims");
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    params.add(prefix + ".w" + std::to_string(l), {dims[l], dims[l + 1]},
               glorot_uniform(dims[l], dims[l + 1], rng));
    params.add(prefix + ".b" + std::to_string(l), {1, dims[l + 1]},
               std::vector<double>(dims[l + 1], 0.0));
  }
}

Tensor mlp_forward(const std::map<std::string, Tensor>& leaves,
                   const std::string& prefix, int n_layers, const Tensor& x) {
  Tensor h = x;
  for (int l = 0; l < n_layers; ++l) {
    const Tensor& w = leaves.at(prefix + ".w" + std::to_string(l));
    const Tensor& b = leaves.at(prefix + ".b" + std::to_string(l));
    h = add(matmul(h, w), b);
    if (l + 1 < n_layers) h = relu(h);
  }
  return h;
}

}  // namespace fenlo
