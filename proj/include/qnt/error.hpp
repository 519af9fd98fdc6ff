#pragma once

#include <stdexcept>
#include <string>

namespace qnt {

// Exit-code mapping used by the CLI: InvalidInput -> 2, IoError -> 1,
// NumericAbort -> 3.

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public IoError {
 public:
  using IoError::IoError;
};

class UnsupportedVersionError : public IoError {
 public:
  using IoError::IoError;
};

class TruncatedFileError : public IoError {
 public:
  using IoError::IoError;
};

class NumericAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qnt
