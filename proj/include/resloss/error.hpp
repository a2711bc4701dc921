#pragma once

#include <stdexcept>
#include <string>

namespace resloss {

/// Failure categories that callers may branch on.
enum class ErrorCode {
  Domain,
  Overflow,
  InvalidInput,
  NoDipFound,
  FitDiverged,
  InsufficientGrid,
  InsufficientData,
  DegenerateInput,
  MissingCalibration,
  Parse,
  DuplicateKey,
  Config,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure carrying the offending file and 1-based line (0 = whole file).
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(ErrorCode::Parse, file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace resloss
