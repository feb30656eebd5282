#pragma once

#include <functional>

#include "fenlo/tensor.hpp"

namespace fenlo {

/// Max relative error between reverse-mode gradients and central finite
/// differences of `f` at `point`: max_i |g_ad - g_fd| / (|g_fd| + 1e-8).
/// `f` must map a tape leaf to a scalar tensor on the same tape.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& point, double h);

}  // namespace fenlo
