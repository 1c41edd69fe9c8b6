#pragma once

#include <functional>

#include "splice/numcore/layers.hpp"

namespace splice::nc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

// Compares autodiff gradients of the scalar `loss` wrt every coordinate of
// `params` against central differences with step h. Relative error per
// coordinate is |g - fd| / max(|g|, |fd|, floor). Every call to `loss` must
// rebuild the graph and use no fresh randomness.
GradCheckResult grad_check(const std::function<Tensor()>& loss, Params& params, double h = 1e-5,
                           double floor = 1e-6);

}  // namespace splice::nc
