#ifndef DDL_ERRORS_HPP
#define DDL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ddl {

// Invalid configuration or arguments supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operand shapes disagree (dictionary vs. signal, model vs. dataset, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure could not produce a usable result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataErrorKind {
  Io,
  BadMagic,
  Truncated,
  CountMismatch,
  Ragged,
  NonNumeric,
  NonFinite,
  InvalidLabel,
  Format,
};

inline const char* to_string(DataErrorKind k) {
  switch (k) {
    case DataErrorKind::Io: return "io";
    case DataErrorKind::BadMagic: return "bad-magic";
    case DataErrorKind::Truncated: return "truncated";
    case DataErrorKind::CountMismatch: return "count-mismatch";
    case DataErrorKind::Ragged: return "ragged";
    case DataErrorKind::NonNumeric: return "non-numeric";
    case DataErrorKind::NonFinite: return "non-finite";
    case DataErrorKind::InvalidLabel: return "invalid-label";
    case DataErrorKind::Format: return "format";
  }
  return "unknown";
}

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  DataErrorKind kind() const noexcept { return kind_; }

 private:
  DataErrorKind kind_;
};

}  // namespace ddl

#endif  // DDL_ERRORS_HPP
