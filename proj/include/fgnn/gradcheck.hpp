#pragma once

#include <functional>
#include <vector>

#include "fgnn/tensor.hpp"

namespace fgnn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares tape gradients of the scalar `f` with respect to `leaves`
/// against central differences, coordinate by coordinate. The relative
/// error of one coordinate is |a - b| / max(floor, |a| + |b|); the floor keeps
/// coordinates whose true gradient sits near the difference quotient's
/// roundoff (about 1e-16 |f| / epsilon) from dominating. `f` must rebuild its
/// graph from the current leaf values on every call.
GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f,
                           const std::vector<Tensor>& leaves, double epsilon = 1e-5,
                           double floor = 1e-6);

}  // namespace fgnn
