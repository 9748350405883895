#pragma once

#include <stdexcept>
#include <string>

namespace protodiag {

// Bad inputs: malformed corpora, checkpoints, config files. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Misused flags or infeasible requests. CLI exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Everything else (contract violations at runtime). CLI exit code 4.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace protodiag
