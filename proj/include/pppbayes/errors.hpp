#pragma once

#include <stdexcept>
#include <string>

namespace pppbayes {

// Every library failure derives from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// An intensity evaluated above its declared lambda_max.
struct BoundViolation : Error {
  using Error::Error;
};

// The forward map G could not be evaluated (e.g. a PDE solve failed).
struct ForwardError : Error {
  using Error::Error;
};

struct SolverInputError : ForwardError {
  using ForwardError::ForwardError;
};

struct SolverFailure : ForwardError {
  using ForwardError::ForwardError;
};

// Weights, responsibilities or densities that collapsed to zero everywhere.
struct DegenerateError : Error {
  using Error::Error;
};

struct SpdViolation : Error {
  using Error::Error;
};

struct EmptyPatternError : Error {
  using Error::Error;
};

struct ContractViolation : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

namespace detail {

template <typename E = InvalidArgument>
inline void require(bool ok, const std::string& what) {
  if (!ok) throw E(what);
}

}  // namespace detail
}  // namespace pppbayes
