#pragma once

#include <stdexcept>
#include <string>

namespace refereval {

// Every library failure carries a short machine-readable code next to the
// human-readable message. The server forwards both as {code, message}.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Input outside an operation's declared domain (load not in the load set,
// probability outside [0,1], invalid cost ordering, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error("domain", message) {}
  DomainError(std::string code, const std::string& message)
      : Error(std::move(code), message) {}
};

// Mathematically degenerate input (zero evidence, zero variance, ...).
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& message)
      : Error("degenerate", message) {}
  DegenerateError(std::string code, const std::string& message)
      : Error(std::move(code), message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

}  // namespace refereval
