#pragma once

#include <stdexcept>
#include <string>

namespace scqa {

/// Shape or length mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (tau <= 0, log of 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke a documented precondition (non-scalar loss, gold span out of range, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad user-supplied data: out-of-vocabulary ids, turn index out of range, empty corpus.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Corpus / checkpoint / config file that does not match its documented schema.
/// `pointer()` is a JSON pointer (or "line N" for key-value files) to the offending node.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string pointer, const std::string& what)
      : std::runtime_error(pointer.empty() ? what : pointer + ": " + what),
        pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace scqa
