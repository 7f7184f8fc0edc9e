#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spillreg {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes (config 2, numeric divergence 3, I/O 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("invalid config field '" + field + "': " + what),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Bad numeric input (non-finite values, out-of-range arguments, short traces).
class InputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class EpisodeExhaustedError : public Error {
 public:
  using Error::Error;
};

class InvalidActionError : public Error {
 public:
  using Error::Error;
};

// Misuse of an API contract, e.g. backpropagating through a stale tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error("training diverged at step " + std::to_string(step) + ": " +
              what),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace spillreg
