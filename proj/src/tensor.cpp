#include "fenlo/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstring>

namespace fenlo {

namespace {

using EMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EMatMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_finite(const std::vector<double>& data, const char* op) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("numeric error in op '") + op +
                               "': non-finite result");
    }
  }
}

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor make_tensor(std::vector<int> shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<int>(data.size())) {
    throw std::invalid_argument("make_tensor: shape/data size mismatch");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("make_tensor: non-finite value");
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<const std::vector<double>>(std::move(data));
  return t;
}

Tensor scalar_tensor(double v) { return make_tensor({1}, {v}); }

Tensor zeros(std::vector<int> shape) {
  int n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tape::leaf(const Tensor& value) {
  Tensor t = value;
  t.tape = this;
  t.node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::vector<double>(t.numel(), 0.0), {}, nullptr});
  return t;
}

Tensor Tape::record(std::vector<int> shape, std::vector<double> data,
                    std::vector<int> inputs, std::function<void(Tape&)> backprop) {
  Tensor t;
  t.shape = std::move(shape);
  int n = t.numel();
  t.data = std::make_shared<const std::vector<double>>(std::move(data));
  t.tape = this;
  t.node = static_cast<int>(nodes_.size());
  for (int in : inputs) {
    if (in >= t.node) throw std::logic_error("Tape::record: input does not precede node");
  }
  nodes_.push_back(Node{std::vector<double>(n, 0.0), std::move(inputs), std::move(backprop)});
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.on_tape() || loss.tape != this) {
    throw std::invalid_argument("backward: loss is not on this tape");
  }
  nodes_[loss.node].grad[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.backprop) continue;
    bool any = false;
    for (double g : node.grad) {
      if (g != 0.0) { any = true; break; }
    }
    if (any) node.backprop(*this);
  }
}

const std::vector<double>& Tape::grad(const Tensor& t) const {
  if (!t.on_tape() || t.tape != this) {
    throw std::invalid_argument("Tape::grad: tensor is not on this tape");
  }
  return nodes_[t.node].grad;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::ln: return "ln";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::concat: return "concat";
    case OpKind::scale: return "scale";
    case OpKind::clamp_exponent: return "clamp_exponent";
    case OpKind::sqrt: return "sqrt";
    case OpKind::square: return "square";
    case OpKind::stop_gradient: return "stop_gradient";
  }
  return "?";
}

namespace {

// Index map for an operand broadcast against an n x m output.
// mode: 0 same, 1 scalar, 2 column (n x 1), 3 row (1 x m)
struct BcastMap {
  int mode;
  int m;  // output cols
  int at(int idx) const {
    switch (mode) {
      case 0: return idx;
      case 1: return 0;
      case 2: return idx / m;
      default: return idx % m;
    }
  }
};

BcastMap map_operand(const Tensor& t, int n, int m, const char* op) {
  if (t.rows() == n && t.cols() == m) return {0, m};
  if (t.numel() == 1) return {1, m};
  if (t.rows() == n && t.cols() == 1) return {2, m};
  if (t.rows() == 1 && t.cols() == m) return {3, m};
  throw std::invalid_argument(std::string("dimension error in op '") + op +
                              "': incompatible shapes");
}

template <typename F, typename DFA, typename DFB>
Tensor binary_op(OpKind kind, const Tensor& a, const Tensor& b, F f, DFA dfa, DFB dfb) {
  const char* name = op_name(kind);
  const Tensor& big = (a.numel() >= b.numel()) ? a : b;
  int n = big.rows(), m = big.cols();
  BcastMap ma = map_operand(a, n, m, name);
  BcastMap mb = map_operand(b, n, m, name);
  int count = n * m;
  std::vector<double> out(count);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  for (int i = 0; i < count; ++i) out[i] = f(av[ma.at(i)], bv[mb.at(i)]);
  check_finite(out, name);

  Tape* tape = a.on_tape() ? a.tape : (b.on_tape() ? b.tape : nullptr);
  if (!tape) return make_tensor(big.shape, std::move(out));
  if (a.on_tape() && b.on_tape() && a.tape != b.tape) {
    throw std::invalid_argument("binary op: operands on different tapes");
  }
  int na = a.on_tape() ? a.node : -1;
  int nb = b.on_tape() ? b.node : -1;
  auto ad = a.data;
  auto bd = b.data;
  struct Self { int node = -1; };
  auto self = std::make_shared<Self>();
  Tensor result = tape->record(
      big.shape, std::move(out), [&] {
        std::vector<int> ins;
        if (na >= 0) ins.push_back(na);
        if (nb >= 0) ins.push_back(nb);
        return ins;
      }(),
      [=](Tape& t) {
        const auto& gout = t.grad(self->node);
        if (na >= 0) {
          auto& ga = t.grad(na);
          for (int i = 0; i < count; ++i) {
            ga[ma.at(i)] += gout[i] * dfa((*ad)[ma.at(i)], (*bd)[mb.at(i)]);
          }
        }
        if (nb >= 0) {
          auto& gb = t.grad(nb);
          for (int i = 0; i < count; ++i) {
            gb[mb.at(i)] += gout[i] * dfb((*ad)[ma.at(i)], (*bd)[mb.at(i)]);
          }
        }
      });
  self->node = result.node;
  return result;
}

// Unary elementwise op. df receives (input value, output value).
template <typename F, typename DF>
Tensor unary_op(const char* name, const Tensor& a, F f, DF df,
                const std::function<void(double)>& domain_check = nullptr) {
  const auto& av = *a.data;
  if (domain_check) {
    for (double v : av) domain_check(v);
  }
  int count = a.numel();
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = f(av[i]);
  check_finite(out, name);
  if (!a.on_tape()) return make_tensor(a.shape, std::move(out));
  auto ad = a.data;
  auto od = std::make_shared<std::vector<double>>(out);
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record(
      a.shape, std::move(out), {na}, [=](Tape& t) {
        const auto& gout = t.grad(*self);
        auto& ga = t.grad(na);
        for (int i = 0; i < count; ++i) ga[i] += gout[i] * df((*ad)[i], (*od)[i]);
      });
  *self = result.node;
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(OpKind::add, a, b,
                   [](double x, double y) { return x + y; },
                   [](double, double) { return 1.0; },
                   [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(OpKind::sub, a, b,
                   [](double x, double y) { return x - y; },
                   [](double, double) { return 1.0; },
                   [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(OpKind::mul, a, b,
                   [](double x, double y) { return x * y; },
                   [](double, double y) { return y; },
                   [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(OpKind::div, a, b,
                   [](double x, double y) { return x / y; },
                   [](double, double y) { return 1.0 / y; },
                   [](double x, double y) { return -x / (y * y); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("dimension error in op 'matmul': incompatible shapes");
  }
  int n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(static_cast<size_t>(n) * m);
  {
    EMat A(a.data->data(), n, k), B(b.data->data(), k, m);
    EMatMut C(out.data(), n, m);
    C.noalias() = A * B;
  }
  check_finite(out, "matmul");
  Tape* tape = a.on_tape() ? a.tape : (b.on_tape() ? b.tape : nullptr);
  if (!tape) return make_tensor({n, m}, std::move(out));
  int na = a.on_tape() ? a.node : -1;
  int nb = b.on_tape() ? b.node : -1;
  auto ad = a.data;
  auto bd = b.data;
  auto self = std::make_shared<int>(-1);
  std::vector<int> ins;
  if (na >= 0) ins.push_back(na);
  if (nb >= 0) ins.push_back(nb);
  Tensor result = tape->record({n, m}, std::move(out), std::move(ins), [=](Tape& t) {
    EMat G(t.grad(*self).data(), n, m);
    if (na >= 0) {
      EMat B(bd->data(), k, m);
      EMatMut GA(t.grad(na).data(), n, k);
      GA.noalias() += G * B.transpose();
    }
    if (nb >= 0) {
      EMat A(ad->data(), n, k);
      EMatMut GB(t.grad(nb).data(), k, m);
      GB.noalias() += A.transpose() * G;
    }
  });
  *self = result.node;
  return result;
}

Tensor transpose(const Tensor& a) {
  int n = a.rows(), m = a.cols();
  std::vector<double> out(static_cast<size_t>(n) * m);
  const auto& av = *a.data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<size_t>(j) * n + i] = av[static_cast<size_t>(i) * m + j];
  if (!a.on_tape()) return make_tensor({m, n}, std::move(out));
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record({m, n}, std::move(out), {na}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& ga = t.grad(na);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga[static_cast<size_t>(i) * m + j] += gout[static_cast<size_t>(j) * n + i];
  });
  *self = result.node;
  return result;
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a,
                  [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op("tanh", a,
                  [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& a) {
  return unary_op("exp", a,
                  [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor ln_op(const Tensor& a) {
  return unary_op("ln", a,
                  [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; },
                  [](double v) {
                    if (v <= 0.0) throw std::domain_error("domain error in op 'ln': non-positive input");
                  });
}

Tensor sqrt_op(const Tensor& a) {
  return unary_op("sqrt", a,
                  [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; },
                  [](double v) {
                    if (v < 0.0) throw std::domain_error("domain error in op 'sqrt': negative input");
                  });
}

Tensor square(const Tensor& a) {
  return unary_op("square", a,
                  [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op("scale", a,
                  [c](double x) { return c * x; },
                  [c](double, double) { return c; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_op("add", a,
                  [c](double x) { return x + c; },
                  [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor clamp_exponent(const Tensor& a) {
  const double c = kExponentClamp;
  return unary_op("clamp_exponent", a,
                  [c](double x) { return std::clamp(x, -c, c); },
                  [c](double x, double) { return (x >= -c && x <= c) ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op("clamp_min", a,
                  [lo](double x) { return x < lo ? lo : x; },
                  [lo](double x, double) { return x >= lo ? 1.0 : 0.0; });
}

Tensor stop_gradient(const Tensor& a) {
  Tensor t;
  t.shape = a.shape;
  t.data = a.data;
  return t;
}

Tensor mean_all(const Tensor& a) {
  int count = a.numel();
  double s = 0.0;
  for (double v : *a.data) s += v;
  double out = s / count;
  if (!std::isfinite(out)) throw std::runtime_error("numeric error in op 'mean': non-finite result");
  if (!a.on_tape()) return scalar_tensor(out);
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record({1}, {out}, {na}, [=](Tape& t) {
    double g = t.grad(*self)[0] / count;
    auto& ga = t.grad(na);
    for (double& v : ga) v += g;
  });
  *self = result.node;
  return result;
}

Tensor sum_all(const Tensor& a) {
  int count = a.numel();
  double s = 0.0;
  for (double v : *a.data) s += v;
  if (!std::isfinite(s)) throw std::runtime_error("numeric error in op 'sum': non-finite result");
  if (!a.on_tape()) return scalar_tensor(s);
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record({1}, {s}, {na}, [=](Tape& t) {
    double g = t.grad(*self)[0];
    auto& ga = t.grad(na);
    for (double& v : ga) v += g;
  });
  *self = result.node;
  (void)count;
  return result;
}

Tensor row_sum(const Tensor& a) {
  int n = a.rows(), m = a.cols();
  std::vector<double> out(n, 0.0);
  const auto& av = *a.data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[i] += av[static_cast<size_t>(i) * m + j];
  check_finite(out, "sum");
  if (!a.on_tape()) return make_tensor({n}, std::move(out));
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record({n}, std::move(out), {na}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& ga = t.grad(na);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga[static_cast<size_t>(i) * m + j] += gout[i];
  });
  *self = result.node;
  return result;
}

Tensor row_mean(const Tensor& a) { return scale(row_sum(a), 1.0 / a.cols()); }

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("dimension error in op 'concat': row mismatch");
  }
  int n = a.rows(), ma = a.cols(), mb = b.cols();
  int m = ma + mb;
  std::vector<double> out(static_cast<size_t>(n) * m);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  for (int i = 0; i < n; ++i) {
    std::memcpy(&out[static_cast<size_t>(i) * m], &av[static_cast<size_t>(i) * ma], ma * sizeof(double));
    std::memcpy(&out[static_cast<size_t>(i) * m + ma], &bv[static_cast<size_t>(i) * mb], mb * sizeof(double));
  }
  Tape* tape = a.on_tape() ? a.tape : (b.on_tape() ? b.tape : nullptr);
  if (!tape) return make_tensor({n, m}, std::move(out));
  int na = a.on_tape() ? a.node : -1;
  int nb = b.on_tape() ? b.node : -1;
  auto self = std::make_shared<int>(-1);
  std::vector<int> ins;
  if (na >= 0) ins.push_back(na);
  if (nb >= 0) ins.push_back(nb);
  Tensor result = tape->record({n, m}, std::move(out), std::move(ins), [=](Tape& t) {
    const auto& gout = t.grad(*self);
    for (int i = 0; i < n; ++i) {
      if (na >= 0) {
        auto& ga = t.grad(na);
        for (int j = 0; j < ma; ++j) ga[static_cast<size_t>(i) * ma + j] += gout[static_cast<size_t>(i) * m + j];
      }
      if (nb >= 0) {
        auto& gb = t.grad(nb);
        for (int j = 0; j < mb; ++j) gb[static_cast<size_t>(i) * mb + j] += gout[static_cast<size_t>(i) * m + ma + j];
      }
    }
  });
  *self = result.node;
  return result;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("dimension error in op 'concat': column mismatch");
  }
  int m = a.cols(), na_rows = a.rows(), nb_rows = b.rows();
  int n = na_rows + nb_rows;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n) * m);
  out.insert(out.end(), a.data->begin(), a.data->end());
  out.insert(out.end(), b.data->begin(), b.data->end());
  Tape* tape = a.on_tape() ? a.tape : (b.on_tape() ? b.tape : nullptr);
  if (!tape) return make_tensor({n, m}, std::move(out));
  int na = a.on_tape() ? a.node : -1;
  int nb = b.on_tape() ? b.node : -1;
  auto self = std::make_shared<int>(-1);
  std::vector<int> ins;
  if (na >= 0) ins.push_back(na);
  if (nb >= 0) ins.push_back(nb);
  Tensor result = tape->record({n, m}, std::move(out), std::move(ins), [=](Tape& t) {
    const auto& gout = t.grad(*self);
    size_t split = static_cast<size_t>(na_rows) * m;
    if (na >= 0) {
      auto& ga = t.grad(na);
      for (size_t i = 0; i < split; ++i) ga[i] += gout[i];
    }
    if (nb >= 0) {
      auto& gb = t.grad(nb);
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += gout[split + i];
    }
  });
  *self = result.node;
  return result;
}

Tensor take_row(const Tensor& a, int i) {
  int n = a.rows(), m = a.cols();
  if (i < 0 || i >= n) throw std::invalid_argument("take_row: index out of range");
  std::vector<double> out(a.data->begin() + static_cast<size_t>(i) * m,
                          a.data->begin() + static_cast<size_t>(i + 1) * m);
  if (!a.on_tape()) return make_tensor({1, m}, std::move(out));
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record({1, m}, std::move(out), {na}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& ga = t.grad(na);
    for (int j = 0; j < m; ++j) ga[static_cast<size_t>(i) * m + j] += gout[j];
  });
  *self = result.node;
  return result;
}

Tensor permute_rows(const Tensor& a, const std::vector<int>& perm) {
  int n = a.rows(), m = a.cols();
  if (static_cast<int>(perm.size()) != n) throw std::invalid_argument("permute_rows: size mismatch");
  std::vector<double> out(static_cast<size_t>(n) * m);
  const auto& av = *a.data;
  for (int i = 0; i < n; ++i) {
    if (perm[i] < 0 || perm[i] >= n) throw std::invalid_argument("permute_rows: index out of range");
    std::memcpy(&out[static_cast<size_t>(i) * m], &av[static_cast<size_t>(perm[i]) * m], m * sizeof(double));
  }
  if (!a.on_tape()) return make_tensor(a.shape, std::move(out));
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  std::vector<int> p = perm;
  Tensor result = a.tape->record(a.shape, std::move(out), {na}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& ga = t.grad(na);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga[static_cast<size_t>(p[i]) * m + j] += gout[static_cast<size_t>(i) * m + j];
  });
  *self = result.node;
  return result;
}

Tensor tile_rows_outer(const Tensor& a, int reps) {
  int n = a.rows(), m = a.cols();
  std::vector<double> out(static_cast<size_t>(n) * reps * m);
  const auto& av = *a.data;
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < reps; ++r)
      std::memcpy(&out[(static_cast<size_t>(i) * reps + r) * m], &av[static_cast<size_t>(i) * m], m * sizeof(double));
  if (!a.on_tape()) return make_tensor({n * reps, m}, std::move(out));
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record({n * reps, m}, std::move(out), {na}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& ga = t.grad(na);
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < reps; ++r)
        for (int j = 0; j < m; ++j)
          ga[static_cast<size_t>(i) * m + j] += gout[(static_cast<size_t>(i) * reps + r) * m + j];
  });
  *self = result.node;
  return result;
}

Tensor tile_rows_cycle(const Tensor& a, int reps) {
  int n = a.rows(), m = a.cols();
  std::vector<double> out(static_cast<size_t>(n) * reps * m);
  const auto& av = *a.data;
  for (int r = 0; r < reps; ++r)
    std::memcpy(&out[static_cast<size_t>(r) * n * m], av.data(), static_cast<size_t>(n) * m * sizeof(double));
  if (!a.on_tape()) return make_tensor({n * reps, m}, std::move(out));
  int na = a.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record({n * reps, m}, std::move(out), {na}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& ga = t.grad(na);
    for (int r = 0; r < reps; ++r)
      for (size_t k = 0; k < static_cast<size_t>(n) * m; ++k)
        ga[k] += gout[static_cast<size_t>(r) * n * m + k];
  });
  *self = result.node;
  return result;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel()) throw std::invalid_argument("reshape: numel mismatch");
  if (!a.on_tape()) {
    Tensor t;
    t.shape = std::move(shape);
    t.data = a.data;
    return t;
  }
  int na = a.node;
  int count = a.numel();
  auto self = std::make_shared<int>(-1);
  Tensor result = a.tape->record(std::move(shape), std::vector<double>(*a.data), {na}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& ga = t.grad(na);
    for (int i = 0; i < count; ++i) ga[i] += gout[i];
  });
  *self = result.node;
  return result;
}

Tensor gather_pairs(const Tensor& table, const std::vector<int>& ix, const std::vector<int>& iy) {
  int a = table.rows(), b = table.cols();
  int k = static_cast<int>(ix.size());
  if (static_cast<int>(iy.size()) != k) throw std::invalid_argument("gather_pairs: index size mismatch");
  for (int v : ix) if (v < 0 || v >= a) throw std::invalid_argument("gather_pairs: x index out of range");
  for (int v : iy) if (v < 0 || v >= b) throw std::invalid_argument("gather_pairs: y index out of range");
  std::vector<double> out(static_cast<size_t>(k) * k);
  const auto& tv = *table.data;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) out[static_cast<size_t>(i) * k + j] = tv[static_cast<size_t>(ix[i]) * b + iy[j]];
  if (!table.on_tape()) return make_tensor({k, k}, std::move(out));
  int nt = table.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = table.tape->record({k, k}, std::move(out), {nt}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& gt = t.grad(nt);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) gt[static_cast<size_t>(ix[i]) * b + iy[j]] += gout[static_cast<size_t>(i) * k + j];
  });
  *self = result.node;
  return result;
}

Tensor gather_diag(const Tensor& table, const std::vector<int>& ix, const std::vector<int>& iy) {
  int a = table.rows(), b = table.cols();
  int k = static_cast<int>(ix.size());
  if (static_cast<int>(iy.size()) != k) throw std::invalid_argument("gather_diag: index size mismatch");
  std::vector<double> out(k);
  const auto& tv = *table.data;
  for (int i = 0; i < k; ++i) {
    if (ix[i] < 0 || ix[i] >= a || iy[i] < 0 || iy[i] >= b)
      throw std::invalid_argument("gather_diag: index out of range");
    out[i] = tv[static_cast<size_t>(ix[i]) * b + iy[i]];
  }
  if (!table.on_tape()) return make_tensor({k}, std::move(out));
  int nt = table.node;
  auto self = std::make_shared<int>(-1);
  Tensor result = table.tape->record({k}, std::move(out), {nt}, [=](Tape& t) {
    const auto& gout = t.grad(*self);
    auto& gt = t.grad(nt);
    for (int i = 0; i < k; ++i) gt[static_cast<size_t>(ix[i]) * b + iy[i]] += gout[i];
  });
  *self = result.node;
  return result;
}

Tensor row_max_detached(const Tensor& a) {
  int n = a.rows(), m = a.cols();
  std::vector<double> out(n);
  const auto& av = *a.data;
  for (int i = 0; i < n; ++i) {
    double best = av[static_cast<size_t>(i) * m];
    for (int j = 1; j < m; ++j) best = std::max(best, av[static_cast<size_t>(i) * m + j]);
    out[i] = best;
  }
  return make_tensor({n}, std::move(out));
}

double max_detached(const Tensor& a) {
  double best = (*a.data)[0];
  for (double v : *a.data) best = std::max(best, v);
  return best;
}

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, double arg) {
  auto need = [&](size_t n) {
    if (inputs.size() != n) throw std::invalid_argument("forward_op: wrong arity");
  };
  switch (kind) {
    case OpKind::matmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::sub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::mul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::div: need(2); return div(inputs[0], inputs[1]);
    case OpKind::relu: need(1); return relu(inputs[0]);
    case OpKind::tanh: need(1); return tanh_op(inputs[0]);
    case OpKind::exp: need(1); return exp_op(inputs[0]);
    case OpKind::ln: need(1); return ln_op(inputs[0]);
    case OpKind::mean: need(1); return mean_all(inputs[0]);
    case OpKind::sum: need(1); return sum_all(inputs[0]);
    case OpKind::concat: need(2); return concat_cols(inputs[0], inputs[1]);
    case OpKind::scale: need(1); return scale(inputs[0], arg);
    case OpKind::clamp_exponent: need(1); return clamp_exponent(inputs[0]);
    case OpKind::sqrt: need(1); return sqrt_op(inputs[0]);
    case OpKind::square: need(1); return square(inputs[0]);
    case OpKind::stop_gradient: need(1); return stop_gradient(inputs[0]);
  }
  throw std::invalid_argument("forward_op: unknown kind");
}

}  // namespace fenlo
