#pragma once

#include <stdexcept>
#include <string>

namespace lsel {

// Base class for every error the library raises. The CLI maps the subclasses
// onto exit codes (data errors -> 2, numerical failures -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, corrupt or inconsistent input data (files, manifests, shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

// Binary container failures. The kind lets callers and tests distinguish the
// documented error classes without matching on message text.
class FormatError : public DataError {
 public:
  enum class Kind { io, bad_magic, truncated_payload, size_mismatch, non_finite, bad_header };

  FormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// A precondition on a numerical routine was violated (zero-norm embedding,
// zero-variance correlation input, mismatched histogram edges, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Training diverged or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace lsel
