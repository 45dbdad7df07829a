#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace robustft {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or batch layouts that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a precondition (bad label, non-scalar root, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An augmentation or optimizer parameter outside its legal range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed files: snapshots, manifests, dataset batches, images.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset = npos)
      : Error(offset == npos ? what : what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Snapshot written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// NaN/Inf produced by a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bisection bracket broke down or ran out of iterations.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace robustft
