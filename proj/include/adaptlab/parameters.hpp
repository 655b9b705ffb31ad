#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "adaptlab/tensor.hpp"

namespace adaptlab {

struct Parameter {
  std::string name;
  std::string group;
  Tensor value;
};

/// Ordered, uniquely named collection of parameter tensors, each tagged with
/// exactly one group. Copying deep-copies every tensor.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  /// Returns a handle sharing storage with the stored tensor.
  Tensor add(const std::string& name, const std::string& group, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const Parameter& entry(const std::string& name) const;

  const std::vector<Parameter>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> names_in_group(const std::string& group) const;
  std::set<std::string> groups() const;
  std::size_t numel() const;

  /// Sets requires_grad on exactly the named parameters and clears it on the
  /// rest. Unknown names are a contract violation.
  void set_trainable(const std::set<std::string>& names);
  std::set<std::string> trainable_names() const;
  void zero_grad();

  /// Copies values from `other` for every parameter whose name and shape match.
  std::size_t copy_matching(const ParameterStore& other, const std::set<std::string>& groups);

 private:
  std::vector<Parameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using GradientMap = std::map<std::string, Tensor>;

/// Clears parameter gradients, backpropagates `loss`, and returns the gradient
/// of every parameter that requires grad. Parameters that do not require grad
/// get no entry.
GradientMap forward_backward(const Tensor& loss, ParameterStore& params);

/// Lower-case hex SHA-256 over names, shapes and little-endian values of the
/// given parameters (in store order).
std::string hash_parameters(const ParameterStore& params, const std::set<std::string>& names);
std::string hash_group(const ParameterStore& params, const std::string& group);

}  // namespace adaptlab
