#pragma once

#include <stdexcept>
#include <string>

namespace nesttune {

// Validation errors are caller mistakes (bad input, violated precondition);
// the CLI maps them to exit code 2.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime failures are environment problems (I/O, measurement failure);
// the CLI maps them to exit code 3.
class RuntimeFailure : public std::runtime_error {
  public:
    explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public ValidationError {
  public:
    ParseError(int line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

    int line() const { return line_; }

  private:
    int line_;
};

}  // namespace nesttune
