#pragma once

#include <stdexcept>
#include <string>

namespace toah {

/// Invalid user configuration or input file. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (NaN loss, unstable step, divergence). Maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace toah
