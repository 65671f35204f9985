#pragma once

#include <stdexcept>
#include <string>

namespace turneval {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (corpus, mapping, caches, stores).
class DataError : public Error {
 public:
  using Error::Error;
};

class CorruptFileError : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatchError : public DataError {
 public:
  using DataError::DataError;
};

/// Remote or mock backend failure. `retryable()` separates transient
/// transport problems from permanent rejections.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

class TransientError : public BackendError {
 public:
  explicit TransientError(const std::string& what) : BackendError(what, true) {}
};

class AuthError : public BackendError {
 public:
  explicit AuthError(const std::string& what) : BackendError(what, false) {}
};

class RequestTooLongError : public BackendError {
 public:
  explicit RequestTooLongError(const std::string& what)
      : BackendError(what, false) {}
};

class DimensionMismatchError : public BackendError {
 public:
  explicit DimensionMismatchError(const std::string& what)
      : BackendError(what, false) {}
};

class RetriesExhaustedError : public BackendError {
 public:
  RetriesExhaustedError(const std::string& what, int attempts)
      : BackendError(what, false), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace turneval
