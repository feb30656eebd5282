#include "fenlo/discrete.hpp"

#include <cmath>
#include <stdexcept>

namespace fenlo {

namespace {
constexpr double kPmiSentinel = -1e6;
constexpr int kMaxAlphabet = 16;
}  // namespace

DiscreteJoint::DiscreteJoint(Table p) : p_(std::move(p)) {
  if (p_.nx < 1 || p_.ny < 1) throw std::invalid_argument("joint table must be nonempty");
  if (p_.nx > kMaxAlphabet || p_.ny > kMaxAlphabet) {
    throw std::invalid_argument("alphabets capped at 16x16");
  }
  double total = 0.0;
  for (double v : p_.v) {
    if (!(v >= 0.0)) throw std::invalid_argument("joint entries must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("table must sum to 1");
  px_.assign(p_.nx, 0.0);
  py_.assign(p_.ny, 0.0);
  for (int x = 0; x < p_.nx; ++x)
    for (int y = 0; y < p_.ny; ++y) {
      px_[x] += p_.at(x, y);
      py_[y] += p_.at(x, y);
    }
  for (double v : px_)
    if (v <= 0.0) throw std::invalid_argument("zero-marginal row rejected");
  for (double v : py_)
    if (v <= 0.0) throw std::invalid_argument("zero-marginal column rejected");
  pmi_ = Table(p_.nx, p_.ny);
  for (int x = 0; x < p_.nx; ++x)
    for (int y = 0; y < p_.ny; ++y) {
      double pxy = p_.at(x, y);
      if (pxy > 0.0) {
        pmi_.at(x, y) = std::log(pxy / (px_[x] * py_[y]));
      } else {
        pmi_.at(x, y) = kPmiSentinel;
        sentinel_ = true;
      }
    }
}

DiscreteJoint DiscreteJoint::random(int nx, int ny, Rng& rng) {
  Table p(nx, ny);
  double total = 0.0;
  for (double& v : p.v) {
    v = -std::log(rng.uniform(1e-12, 1.0));
    total += v;
  }
  for (double& v : p.v) v /= total;
  // Renormalize exactly: push rounding slack into the largest cell.
  double s = 0.0;
  for (double v : p.v) s += v;
  size_t arg = 0;
  for (size_t i = 1; i < p.v.size(); ++i)
    if (p.v[i] > p.v[arg]) arg = i;
  p.v[arg] += 1.0 - s;
  return DiscreteJoint(std::move(p));
}

DiscreteJoint DiscreteJoint::independent(const std::vector<double>& px,
                                         const std::vector<double>& py) {
  Table p(static_cast<int>(px.size()), static_cast<int>(py.size()));
  for (int x = 0; x < p.nx; ++x)
    for (int y = 0; y < p.ny; ++y) p.at(x, y) = px[x] * py[y];
  double s = 0.0;
  for (double v : p.v) s += v;
  p.v[0] += 1.0 - s;
  return DiscreteJoint(std::move(p));
}

double exact_mi(const DiscreteJoint& joint) {
  double mi = 0.0;
  for (int x = 0; x < joint.nx(); ++x)
    for (int y = 0; y < joint.ny(); ++y) {
      double pxy = joint.p().at(x, y);
      if (pxy > 0.0) mi += pxy * joint.pmi().at(x, y);
    }
  return mi;
}

OptimalCritics optimal_critics(const DiscreteJoint& joint, const std::vector<double>* drift) {
  if (drift && static_cast<int>(drift->size()) != joint.nx()) {
    throw std::invalid_argument("optimal_critics: drift size must match |X|");
  }
  OptimalCritics out;
  out.g = Table(joint.nx(), joint.ny());
  out.u = Table(joint.nx(), joint.ny());
  for (int x = 0; x < joint.nx(); ++x)
    for (int y = 0; y < joint.ny(); ++y) {
      double p_x_given_y = joint.p().at(x, y) / joint.py()[y];
      double c = drift ? (*drift)[x] : 0.0;
      if (p_x_given_y > 0.0) {
        out.g.at(x, y) = std::log(p_x_given_y) + c;
      } else {
        out.g.at(x, y) = kPmiSentinel + c;
        out.sentinel_used = true;
      }
      out.u.at(x, y) = -joint.pmi().at(x, y);
      if (joint.p().at(x, y) <= 0.0) out.sentinel_used = true;
    }
  return out;
}

UbaResult exact_uba(const DiscreteJoint& joint, const Table& g) {
  if (g.nx != joint.nx() || g.ny != joint.ny()) {
    throw std::invalid_argument("exact_uba: g-table shape mismatch");
  }
  UbaResult out;
  out.grad = Table(g.nx, g.ny);
  // Stabilize Z(x) = sum_y' p(y') e^{g(x,y')} with the per-row max.
  for (int x = 0; x < g.nx; ++x) {
    double mx = g.at(x, 0);
    for (int y = 1; y < g.ny; ++y) mx = std::max(mx, g.at(x, y));
    double z = 0.0;
    for (int y = 0; y < g.ny; ++y) z += joint.py()[y] * std::exp(g.at(x, y) - mx);
    double log_z = std::log(z) + mx;
    for (int y = 0; y < g.ny; ++y) {
      out.value += joint.p().at(x, y) * (g.at(x, y) - log_z);
      double soft = joint.py()[y] * std::exp(g.at(x, y) - mx) / z;  // p(y)e^g / Z
      out.grad.at(x, y) = joint.p().at(x, y) - joint.px()[x] * soft;
    }
  }
  return out;
}

namespace {

// S(x,y) = sum_y' p(y') e^{g(x,y') - g(x,y)}
Table score_ratio_sums(const DiscreteJoint& joint, const Table& g) {
  Table s(g.nx, g.ny);
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      double acc = 0.0;
      for (int yp = 0; yp < g.ny; ++yp) {
        acc += joint.py()[yp] * std::exp(g.at(x, yp) - g.at(x, y));
      }
      s.at(x, y) = acc;
    }
  return s;
}

}  // namespace

double exact_flo(const DiscreteJoint& joint, const Table& g, const Table& u) {
  if (g.nx != joint.nx() || g.ny != joint.ny() || u.nx != joint.nx() || u.ny != joint.ny()) {
    throw std::invalid_argument("exact_flo: table shape mismatch");
  }
  Table s = score_ratio_sums(joint, g);
  double acc = 0.0;
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      double pxy = joint.p().at(x, y);
      if (pxy == 0.0) continue;
      acc += pxy * (u.at(x, y) + std::exp(-u.at(x, y)) * s.at(x, y));
    }
  return 1.0 - acc;
}

FloGrads exact_flo_grad(const DiscreteJoint& joint, const Table& g, const Table& u) {
  FloGrads out;
  out.value = exact_flo(joint, g, u);
  out.dg = Table(g.nx, g.ny);
  out.du = Table(g.nx, g.ny);
  Table s = score_ratio_sums(joint, g);
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      double pxy = joint.p().at(x, y);
      out.du.at(x, y) = -pxy * (1.0 - std::exp(-u.at(x, y)) * s.at(x, y));
    }
  // d value / d g(a,b) = P_ab e^{-u_ab} S_ab
  //   - sum_y P_ay e^{-u_ay} p(b) e^{g(a,b) - g(a,y)}
  for (int a = 0; a < g.nx; ++a)
    for (int b = 0; b < g.ny; ++b) {
      double acc = joint.p().at(a, b) * std::exp(-u.at(a, b)) * s.at(a, b);
      for (int y = 0; y < g.ny; ++y) {
        acc -= joint.p().at(a, y) * std::exp(-u.at(a, y)) * joint.py()[b] *
               std::exp(g.at(a, b) - g.at(a, y));
      }
      out.dg.at(a, b) = acc;
    }
  return out;
}

}  // namespace fenlo
