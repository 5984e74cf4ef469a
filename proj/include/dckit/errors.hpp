#pragma once

#include <stdexcept>
#include <string>

namespace dckit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A log argument (or other restricted-domain atom) was evaluated outside its domain.
class DomainViolation : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap before reaching tolerance.
class NonConvergence : public Error {
 public:
  explicit NonConvergence(const std::string& what, int iteration = -1)
      : Error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

class NotFeasible : public Error {
 public:
  using Error::Error;
};

class UnsupportedStructure : public Error {
 public:
  using Error::Error;
};

/// Enumerating index tuples would exceed the configured cap.
class TupleExplosion : public Error {
 public:
  using Error::Error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

class NotOnBoundary : public Error {
 public:
  using Error::Error;
};

class UnknownName : public Error {
 public:
  using Error::Error;
};

class CurvatureMismatch : public Error {
 public:
  using Error::Error;
};

/// Malformed JSON input; the message carries the offending field path.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace dckit
