#pragma once

#include <stdexcept>
#include <string>

namespace geoctrl {

/// Machine-readable failure categories surfaced by every module and mapped
/// onto CLI diagnostics.
enum class ErrorCode {
  kSyntax,
  kUnknownIdentifier,
  kArity,
  kExponent,
  kDomain,
  kDimension,
  kEmptyInput,
  kNotRegular,
  kWindowEscape,
  kStepUnderflow,
  kRankMismatch,
  kSpecFormat,
  kAssumptionMissing,
  kIo,
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntax: return "E_SYNTAX";
    case ErrorCode::kUnknownIdentifier: return "E_UNKNOWN_IDENT";
    case ErrorCode::kArity: return "E_ARITY";
    case ErrorCode::kExponent: return "E_EXPONENT";
    case ErrorCode::kDomain: return "E_DOMAIN";
    case ErrorCode::kDimension: return "E_DIMENSION";
    case ErrorCode::kEmptyInput: return "E_EMPTY";
    case ErrorCode::kNotRegular: return "E_NOT_REGULAR";
    case ErrorCode::kWindowEscape: return "E_WINDOW_ESCAPE";
    case ErrorCode::kStepUnderflow: return "E_STEP_UNDERFLOW";
    case ErrorCode::kRankMismatch: return "E_RANK_MISMATCH";
    case ErrorCode::kSpecFormat: return "E_SPEC_FORMAT";
    case ErrorCode::kAssumptionMissing: return "E_ASSUMPTION_MISSING";
    case ErrorCode::kIo: return "E_IO";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Syntax-level failure carrying a 1-based source location.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, const std::string& what, int line, int column)
      : Error(code, what + " at line " + std::to_string(line) + ", column " +
                        std::to_string(column)),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace geoctrl
