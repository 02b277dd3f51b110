#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace omniisr {

/// Invalid user-supplied configuration (bad shapes, out-of-range tap plans,
/// unknown config keys). The CLI maps this to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape disagreement discovered while evaluating a graph node.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Two parameter sets (or client updates) that cannot be combined.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mathematical precondition failed (e.g. division by a zero step size).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Internal misuse of an API (backward before forward, non-scalar loss).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training produced a non-finite loss. The CLI maps this to exit status 2.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace omniisr
