#pragma once

#include <functional>
#include <string>
#include <vector>

#include "adaptlab/parameters.hpp"

namespace adaptlab {

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries whose
// true gradient is zero from dividing rounding noise by zero.
inline constexpr double kGradientCheckFloor = 1e-4;

/// Compares reverse-mode gradients of `loss_fn` with central differences of
/// step `epsilon` for every element of every parameter in `params` that
/// requires grad.
GradientCheckResult gradient_check_detailed(const std::function<Tensor()>& loss_fn, ParameterStore& params,
                                            double epsilon = 1e-5);

double gradient_check(const std::function<Tensor()>& loss_fn, ParameterStore& params, double epsilon = 1e-5);

}  // namespace adaptlab
