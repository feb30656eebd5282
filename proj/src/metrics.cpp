#include "fenlo/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace fenlo {

std::array<double, 9> decile_quantiles(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("decile_quantiles: empty input");
  std::sort(values.begin(), values.end());
  std::array<double, 9> out{};
  size_t n = values.size();
  for (int q = 1; q <= 9; ++q) {
    double pos = 0.1 * q * (n - 1);
    size_t lo = static_cast<size_t>(pos);
    double frac = pos - lo;
    out[q - 1] = (lo + 1 < n) ? values[lo] * (1.0 - frac) + values[lo + 1] * frac : values[lo];
  }
  return out;
}

}  // namespace fenlo
