#include "adaptlab/optim.hpp"

#include <cmath>

namespace adaptlab {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  ADAPTLAB_REQUIRE(params.size() == grads.size(), "adam_step: one gradient per parameter required");
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Tensor::zeros(p.shape()));
      state.second_moment.push_back(Tensor::zeros(p.shape()));
    }
  }
  ADAPTLAB_REQUIRE(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
                   "adam_step: moment count does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    ADAPTLAB_REQUIRE(grads[i].shape() == params[i].shape() && state.first_moment[i].shape() == params[i].shape() &&
                         state.second_moment[i].shape() == params[i].shape(),
                     "adam_step: shape mismatch at parameter " + std::to_string(i));
  }

  state.step += 1;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].mutable_values();
    auto v = state.second_moment[i].mutable_values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= h.lr * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
}

Adam::Adam(const ParameterStore& params, std::set<std::string> names, AdamHyper hyper) {
  // Store order keeps updates deterministic independent of set ordering.
  for (const auto& p : params.entries())
    if (names.count(p.name)) names_.push_back(p.name);
  ADAPTLAB_REQUIRE(names_.size() == names.size(), "Adam: unknown parameter name");
  state_.hyper = hyper;
}

void Adam::step(ParameterStore& params) {
  std::vector<Tensor> targets;
  std::vector<Tensor> grads;
  targets.reserve(names_.size());
  grads.reserve(names_.size());
  for (const auto& name : names_) {
    Tensor& p = params.get(name);
    targets.push_back(p);
    if (p.has_grad())
      grads.emplace_back(p.shape(), std::vector<double>(p.grad().begin(), p.grad().end()));
    else
      grads.push_back(Tensor::zeros(p.shape()));
  }
  adam_step(targets, grads, state_);
}

}  // namespace adaptlab
