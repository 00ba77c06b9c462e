#pragma once

#include <stdexcept>
#include <string>

namespace biseg {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not agree, or a dimension outside an op's domain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable input data: files, CSVs, dataset directories.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or unknown names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training or evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Binary tensor file problems. Each failure mode has its own kind so callers
// can tell a wrong file from a damaged one.
class FormatError : public DataError {
 public:
  enum class Kind { kBadMagic, kBadVersion, kBadDtype, kTruncated, kDimensionOverflow, kTrailingBytes };

  FormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace biseg
