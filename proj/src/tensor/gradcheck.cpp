#include "adaptlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace adaptlab {

GradientCheckResult gradient_check_detailed(const std::function<Tensor()>& loss_fn, ParameterStore& params,
                                            double epsilon) {
  ADAPTLAB_REQUIRE(epsilon > 0.0, "gradient_check: epsilon must be positive");
  GradientMap analytic = forward_backward(loss_fn(), params);

  GradientCheckResult result;
  NoGradGuard no_grad;
  for (auto& [name, grad] : analytic) {
    auto values = params.get(name).mutable_values();
    auto g = grad.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + epsilon;
      const double plus = loss_fn().item();
      values[i] = original - epsilon;
      const double minus = loss_fn().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), kGradientCheckFloor});
      const double err = std::abs(g[i] - numeric) / denom;
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = name;
        result.worst_index = i;
        result.analytic = g[i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

double gradient_check(const std::function<Tensor()>& loss_fn, ParameterStore& params, double epsilon) {
  return gradient_check_detailed(loss_fn, params, epsilon).max_relative_error;
}

}  // namespace adaptlab
