#pragma once

#include <array>
#include <string>
#include <vector>

namespace fenlo {

/// One benchmark observation; the unit of all CSV output.
struct MetricRecord {
  int step = 0;
  std::string kind;
  int k = 0;
  double estimate = 0.0;
  std::array<double, 9> quantiles{};  // deciles 10%..90%
  double truth = 0.0;
  double wall_ms = 0.0;
  // Sweep bookkeeping.
  double rho = 0.0;
  int d = 0;
  int trial = 0;
  bool failed = false;
};

/// Decile quantiles {10%,...,90%} with linear interpolation.
std::array<double, 9> decile_quantiles(std::vector<double> values);

}  // namespace fenlo
