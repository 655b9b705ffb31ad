#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "adaptlab/parameters.hpp"

namespace adaptlab {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  AdamHyper hyper;
};

/// One bias-corrected Adam update, in place. Moments are created on the first
/// call; afterwards they must match the parameter shapes.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

/// Adam over a fixed set of named parameters in a store. Parameters without a
/// gradient are treated as having a zero gradient.
class Adam {
 public:
  Adam(const ParameterStore& params, std::set<std::string> names, AdamHyper hyper);

  void step(ParameterStore& params);
  const AdamState& state() const { return state_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  AdamState state_;
};

}  // namespace adaptlab
