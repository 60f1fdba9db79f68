#pragma once

#include <stdexcept>
#include <string>

namespace gravem {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed inputs: bad files, inconsistent dimensions, out-of-range arguments.
class DataError : public Error {
public:
  using Error::Error;
};

/// Numerical breakdown: failed factorizations, non-finite rates, sampler pathologies.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Bad command-line or configuration usage.
class UsageError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DataError(what);
}

}  // namespace detail
}  // namespace gravem
