#pragma once

#include <stdexcept>
#include <string>

namespace earlystop {

/// Caller supplied data outside an operation's domain (lengths, ranges, NaNs).
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A filter or experiment configuration that cannot be evaluated.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Floating-point failure: non-finite values, eigensolver breakdown, underflow.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// The operation needs state the inputs do not carry (e.g. oracle fields).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// A root-finder could not bracket or resolve its target.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace earlystop
