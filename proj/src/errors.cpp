#include "normgen/errors.hpp"

namespace normgen {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedImage: return "malformed-image";
    case ErrorKind::EmptyForeground: return "empty-foreground";
    case ErrorKind::InvalidThreshold: return "invalid-threshold";
    case ErrorKind::InvalidProbability: return "invalid-probability";
    case ErrorKind::OutOfFrame: return "out-of-frame";
    case ErrorKind::EmptySketch: return "empty-sketch";
    case ErrorKind::InvalidShape: return "invalid-shape";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::MissingGenerated: return "missing-generated";
  }
  return "unknown";
}

}  // namespace normgen
