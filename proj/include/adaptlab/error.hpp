#pragma once

#include <stdexcept>
#include <string>

namespace adaptlab {

/// Raised when a caller breaks an operation's precondition (bad shapes,
/// non-scalar loss, invalid configuration).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for malformed or unusable input data (files, corpora).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void contract_failure(const std::string& what) {
  throw ContractViolation(what);
}
}  // namespace detail

#define ADAPTLAB_REQUIRE(cond, msg)                          \
  do {                                                       \
    if (!(cond)) ::adaptlab::detail::contract_failure(msg);  \
  } while (false)

}  // namespace adaptlab
