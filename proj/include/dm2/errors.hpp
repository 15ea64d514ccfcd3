#pragma once

#include <stdexcept>
#include <string>

namespace dm2 {

// Out-of-range state, action, or agent index.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Invalid configuration or parameters (environment specs, experiment configs).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed numeric inputs: non-normalized distributions, empty batches, etc.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure: singular solves, non-convergence, non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A hypothesis required by a verification routine does not hold.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input lies outside the supported scope (e.g. stochastic experts).
class UnsupportedInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace dm2
