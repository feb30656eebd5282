#pragma once

#include <vector>

#include "fenlo/rng.hpp"

namespace fenlo {

/// Row-major |X| x |Y| table of reals.
struct Table {
  int nx = 0, ny = 0;
  std::vector<double> v;

  Table() = default;
  Table(int nx_, int ny_, double fill = 0.0)
      : nx(nx_), ny(ny_), v(static_cast<size_t>(nx_) * ny_, fill) {}
  double& at(int x, int y) { return v[static_cast<size_t>(x) * ny + y]; }
  double at(int x, int y) const { return v[static_cast<size_t>(x) * ny + y]; }
};

/// Exact finite-alphabet joint distribution with derived marginals and PMI.
class DiscreteJoint {
 public:
  /// Validates: entries >= 0, sums to 1 within 1e-12, strictly positive
  /// marginals, alphabets at most 16 x 16.
  explicit DiscreteJoint(Table p);

  const Table& p() const { return p_; }
  const std::vector<double>& px() const { return px_; }
  const std::vector<double>& py() const { return py_; }
  const Table& pmi() const { return pmi_; }
  /// True when a zero cell forced the -1e6 PMI sentinel.
  bool pmi_sentinel_used() const { return sentinel_; }
  int nx() const { return p_.nx; }
  int ny() const { return p_.ny; }

  static DiscreteJoint random(int nx, int ny, Rng& rng);
  static DiscreteJoint independent(const std::vector<double>& px,
                                   const std::vector<double>& py);

 private:
  Table p_, pmi_;
  std::vector<double> px_, py_;
  bool sentinel_ = false;
};

/// Shannon MI in nats: sum P ln(P/(px py)), with 0 ln 0 := 0.
double exact_mi(const DiscreteJoint& joint);

struct OptimalCritics {
  Table g;  // ln p(x|y) + c(x)
  Table u;  // -PMI
  bool sentinel_used = false;
};

/// Optimal critic pair; optional drift c adds an arbitrary per-x offset to g.
OptimalCritics optimal_critics(const DiscreteJoint& joint,
                               const std::vector<double>* drift = nullptr);

struct UbaResult {
  double value = 0.0;
  Table grad;  // d value / d g, by exact differentiation
};

/// Exact-expectation UBA bound and its gradient with respect to the g-table.
UbaResult exact_uba(const DiscreteJoint& joint, const Table& g);

/// Exact-expectation FLO bound.
double exact_flo(const DiscreteJoint& joint, const Table& g, const Table& u);

struct FloGrads {
  double value = 0.0;
  Table dg, du;
};

/// Exact FLO value plus exact gradients with respect to both tables.
FloGrads exact_flo_grad(const DiscreteJoint& joint, const Table& g, const Table& u);

}  // namespace fenlo
