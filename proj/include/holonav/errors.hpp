#pragma once

#include <stdexcept>
#include <string>

namespace holonav {

/// Caller handed in something outside an operation's domain.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Point configuration cannot determine a unique rigid fit (collinear, coincident).
class DegenerateConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pivot poses do not constrain every component of (tip, pivot).
class UnobservableMotion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not permitted in the current workflow or mount state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Persisted data (volume, config, log) failed to parse or validate.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace holonav
