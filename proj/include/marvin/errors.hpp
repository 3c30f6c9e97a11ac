#pragma once

#include <stdexcept>
#include <string>

namespace marvin {

/// Raised when an operation is requested in a state machine phase that forbids it.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The positioning device is already executing a motion.
class BusyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A payload does not match the schema registered for its topic.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class NoPathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The person goal cannot be computed (no torso joints, or depth out of range).
class NoGoalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace marvin
