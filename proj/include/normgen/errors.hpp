#pragma once

#include <stdexcept>
#include <string>

namespace normgen {

enum class ErrorKind {
  MalformedImage,
  EmptyForeground,
  InvalidThreshold,
  InvalidProbability,
  OutOfFrame,
  EmptySketch,
  InvalidShape,
  EmptyInput,
  Io,
  Config,
  ShapeMismatch,
  NonFinite,
  UndefinedMetric,
  MissingGenerated,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace normgen
