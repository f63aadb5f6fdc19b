#pragma once

#include <stdexcept>
#include <string>

namespace tsbc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad index sets, mismatched lengths, inconsistent partitions.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Parameters outside the region where a data-generating algorithm is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input data that an estimator cannot handle.
class DataError : public Error {
 public:
  using Error::Error;
};

// An item with a single observed response category.
class BoundaryError : public DataError {
 public:
  BoundaryError(const std::string& what, int item) : DataError(what), item_(item) {}
  int item() const { return item_; }

 private:
  int item_;
};

class IdentificationError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Failures of the covariance machinery (singular Jacobian, too many skipped draws).
class InferenceError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsbc
