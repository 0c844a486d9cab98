#pragma once

#include <stdexcept>
#include <string>

namespace nbqf {

/// Invalid or inconsistent configuration. Raised before any sampling starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that fails validation (malformed rows, empty groups, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nbqf
