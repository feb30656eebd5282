#include "fenlo/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace fenlo {

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& point, double h) {
  std::vector<double> g_ad;
  {
    Tape tape;
    Tensor x = tape.leaf(point);
    Tensor loss = f(tape, x);
    if (loss.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    tape.backward(loss);
    g_ad = tape.grad(x);
  }
  auto eval = [&](const std::vector<double>& v) {
    Tape tape;
    Tensor x = tape.leaf(make_tensor(point.shape, v));
    return f(tape, x).scalar();
  };
  std::vector<double> v = *point.data;
  double worst = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    double orig = v[i];
    v[i] = orig + h;
    double fp = eval(v);
    v[i] = orig - h;
    double fm = eval(v);
    v[i] = orig;
    double g_fd = (fp - fm) / (2.0 * h);
    if (!std::isfinite(g_fd)) throw std::runtime_error("grad_check: non-finite finite difference");
    double err = std::abs(g_ad[i] - g_fd) / (std::abs(g_fd) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace fenlo
