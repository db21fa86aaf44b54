#pragma once

#include <stdexcept>
#include <string>

namespace cyclecap {

// Error categories map to CLI exit codes: config=2, io=3, numeric=4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace cyclecap
