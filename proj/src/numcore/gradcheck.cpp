#include "splice/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace splice::nc {

GradCheckResult grad_check(const std::function<Tensor()>& loss, Params& params, double h, double floor) {
  zero_grad(params);
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : params) {
    auto g = t.grad();
    analytic.emplace_back(t.numel(), 0.0);
    if (!g.empty()) std::copy(g.begin(), g.end(), analytic.back().begin());
  }
  zero_grad(params);

  GradCheckResult res;
  NoGradGuard guard;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].second.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double fp = loss().item();
      w[i] = orig - h;
      const double fm = loss().item();
      w[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      ++res.coordinates;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = params[p].first;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace splice::nc
