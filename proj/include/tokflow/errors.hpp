#pragma once

#include <stdexcept>
#include <string>

namespace tokflow {

// Error categories used across the library. The CLI maps each to a distinct
// exit code so callers can tell a bad config from a corrupt file.
struct DimError : std::runtime_error {
  explicit DimError(const std::string& m) : std::runtime_error("dimension error: " + m) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error("config error: " + m) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& m) : std::runtime_error("contract error: " + m) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& m) : std::runtime_error("format error: " + m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& m) : std::runtime_error("training error: " + m) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error("io error: " + m) {}
};

}  // namespace tokflow
