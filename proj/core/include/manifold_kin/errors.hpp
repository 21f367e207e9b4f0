#pragma once

#include <stdexcept>
#include <string>

namespace mkin {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text: JSON, config files, CLI argument syntax.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Structurally valid input that violates a semantic invariant
/// (limit ordering, group sizes, chain-hash mismatch, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Bad arguments to an operation (out-of-range scalar, dimension
/// mismatch, non-finite values, empty input).
class InputError : public Error {
public:
  using Error::Error;
};

/// Binary artifact problems: bad magic, version, checksum, truncation.
class FormatError : public Error {
public:
  using Error::Error;
};

}  // namespace mkin
