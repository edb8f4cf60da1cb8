#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mac_alloc {

/// A policy tried to spend more energy than a user has left.
class OverdraftError : public std::runtime_error {
 public:
  OverdraftError(std::size_t user, double requested, double available);

  std::size_t user() const noexcept { return user_; }

 private:
  std::size_t user_;
};

/// Water-filling has a positive budget but no slot with finite noise ratio.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested distribution/quadrature combination is not implemented.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The DP grid would exceed the configured memory budget.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cross-policy invariant broken during simulation (e.g. a causal policy beat offline).
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mac_alloc
