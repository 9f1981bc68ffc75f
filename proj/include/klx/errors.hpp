#pragma once

#include <stdexcept>
#include <string>

namespace klx {

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised when a weak handle is asked for a strong-oracle query.
struct CapabilityError : std::logic_error {
  using std::logic_error::logic_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnvironmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetError : std::length_error {
  using std::length_error::length_error;
};

struct SchemaError : std::runtime_error {
  SchemaError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path(path) {}
  std::string path;
};

}  // namespace klx
