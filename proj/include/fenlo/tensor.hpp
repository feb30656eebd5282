#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fenlo {

// Arguments to exp are clamped to this band inside estimator losses so
// score differences can never overflow a double.
inline constexpr double kExponentClamp = 30.0;

class Tape;

/// Dense row-major tensor of 64-bit reals, optionally attached to a tape node.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<const std::vector<double>> data;
  Tape* tape = nullptr;
  int node = -1;

  int numel() const {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }
  bool on_tape() const { return tape != nullptr && node >= 0; }
  double scalar() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::scalar: tensor is not scalar");
    return (*data)[0];
  }
  const std::vector<double>& values() const { return *data; }
};

/// Builds a constant tensor; rejects non-finite values and shape/data mismatch.
Tensor make_tensor(std::vector<int> shape, std::vector<double> data);
Tensor scalar_tensor(double v);
Tensor zeros(std::vector<int> shape);

/// Reverse-mode tape. Nodes are appended in topological order; backward
/// visits each node exactly once, in reverse.
class Tape {
 public:
  struct Node {
    std::vector<double> grad;
    std::vector<int> inputs;
    std::function<void(Tape&)> backprop;  // may be empty (leaf)
  };

  /// Copies a value onto the tape as a differentiable leaf.
  Tensor leaf(const Tensor& value);

  /// Records an op result. Called by op implementations.
  Tensor record(std::vector<int> shape, std::vector<double> data,
                std::vector<int> inputs, std::function<void(Tape&)> backprop);

  void backward(const Tensor& loss);

  std::vector<double>& grad(int node) { return nodes_[node].grad; }
  const std::vector<double>& grad(const Tensor& t) const;
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

enum class OpKind {
  matmul, add, sub, mul, div, relu, tanh, exp, ln, mean, sum, concat,
  scale, clamp_exponent, sqrt, square, stop_gradient
};

const char* op_name(OpKind kind);

/// Generic dispatch over the op vocabulary. The named functions below are the
/// primary API; this exists so tests can sweep the whole table.
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, double arg = 0.0);

// Elementwise ops broadcast a row vector (1 x m or length m) over rows, a
// column (n x 1) over columns, or a scalar over everything.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor ln_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
Tensor square(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor row_sum(const Tensor& a);   // n x m -> n x 1
Tensor row_mean(const Tensor& a);  // n x m -> n x 1
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor clamp_exponent(const Tensor& a);  // clamp to [-30, 30], zero grad outside
Tensor clamp_min(const Tensor& a, double lo);  // zero subgradient below lo
Tensor stop_gradient(const Tensor& a);
Tensor neg(const Tensor& a);

// Structured ops used by critics and losses.
Tensor take_row(const Tensor& a, int i);                 // n x m -> 1 x m
Tensor permute_rows(const Tensor& a, const std::vector<int>& perm);
Tensor tile_rows_outer(const Tensor& a, int reps);       // row i repeated reps times
Tensor tile_rows_cycle(const Tensor& a, int reps);       // whole matrix repeated
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor gather_pairs(const Tensor& table, const std::vector<int>& ix,
                    const std::vector<int>& iy);          // K x K from a x b table
Tensor gather_diag(const Tensor& table, const std::vector<int>& ix,
                   const std::vector<int>& iy);           // length K

// Detached helpers (plain values, never on tape).
Tensor row_max_detached(const Tensor& a);  // n x 1
double max_detached(const Tensor& a);

}  // namespace fenlo
