#pragma once

#include <stdexcept>
#include <string>

namespace crl {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid model, config or missing artifact detected at load/setup time.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation not permitted in the object's current state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input file. `line` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace crl
