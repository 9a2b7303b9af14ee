#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mpr {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input: files, formulas, ids, configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Formula syntax error; `position` is the byte offset into the source text.
class ParseError : public InputError {
 public:
  ParseError(const std::string& message, std::size_t position)
      : InputError(message + " at position " + std::to_string(position)), position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// A bounded temporal operator reaches past the end of the signal.
class HorizonError : public InputError {
 public:
  using InputError::InputError;
};

/// Factorization failures, non-finite likelihoods and similar numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpr
