#pragma once

#include <stdexcept>
#include <string>

namespace mffals {

/// Caller violated a precondition (dimension mismatch, out-of-range index, bad config value).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A factorization or optimization could not produce a usable result.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A simulator run failed; carries the fidelity it was running at.
class SimulatorFailure : public std::runtime_error {
 public:
  SimulatorFailure(int fidelity, const std::string& what)
      : std::runtime_error("fidelity " + std::to_string(fidelity) + ": " + what), fidelity_(fidelity) {}

  int fidelity() const noexcept { return fidelity_; }

 private:
  int fidelity_;
};

}  // namespace mffals
