#pragma once

#include <stdexcept>
#include <string>

namespace noisebench {

/// Bad input: malformed files, invalid configs, violated preconditions.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training method failed to produce a usable model.
class MethodFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during optimisation.
class TrainingDiverged : public MethodFailure {
 public:
  using MethodFailure::MethodFailure;
};

}  // namespace noisebench
