#pragma once

#include <stdexcept>
#include <string>

namespace multee {

// Every failure surfaced by the library carries a stable machine-readable
// kind, used verbatim in the CLI's error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MULTEE_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

MULTEE_DEFINE_ERROR(EmptyText)
MULTEE_DEFINE_ERROR(SpanNotFound)
MULTEE_DEFINE_ERROR(ValidationError)
MULTEE_DEFINE_ERROR(GenerationError)
MULTEE_DEFINE_ERROR(IndexError)
MULTEE_DEFINE_ERROR(ShapeError)
MULTEE_DEFINE_ERROR(ConfigError)
MULTEE_DEFINE_ERROR(IoError)
MULTEE_DEFINE_ERROR(CheckpointError)

#undef MULTEE_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line)
      : Error("ParseError", "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace multee
