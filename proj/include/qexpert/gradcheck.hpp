#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qexpert/tensor.hpp"

namespace qexpert {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the analytic gradients already stored in `params` against central
/// finite differences of `loss`. `loss` must recompute the scalar from the
/// current parameter values without touching their gradient buffers.
/// Relative error is |a - f| / max(|a|, |f|, 1e-8).
inline GradCheckResult grad_check(const std::function<double()>& loss, const std::vector<Tensor<double>*>& params,
                                  double step = 1e-5) {
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    if (!p->has_grad()) throw std::invalid_argument("grad_check: parameter " + std::to_string(pi) + " has no gradient");
    auto data = p->data();
    auto grad = p->grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = loss();
      data[i] = saved - step;
      const double down = loss();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grad[i];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic))
        throw std::domain_error("grad_check: non-finite value at parameter " + std::to_string(pi) + ", element " +
                                std::to_string(i));
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = pi;
        res.worst_index = i;
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace qexpert
