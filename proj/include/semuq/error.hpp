#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace semuq {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A record or input violates a documented invariant.
class ValidationError : public Error
{
public:
  using Error::Error;
};

/// An argument is outside its admissible range.
class ParameterError : public Error
{
public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error
{
public:
  using Error::Error;
};

/// The input carries no usable mass (empty sets, all-zero vectors, ...).
class DegenerateInputError : public Error
{
public:
  using Error::Error;
};

/// An eigensolver or other numerical kernel failed.
class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Perturbation theory cannot be applied because the spectrum collapsed.
class DegeneracyError : public Error
{
public:
  using Error::Error;
};

/// A remote backend could not be reached after all retries.
class TransportError : public Error
{
public:
  using Error::Error;
};

/// A remote backend answered with something we cannot interpret.
class ProtocolError : public Error
{
public:
  ProtocolError(const std::string& what, std::string raw)
    : Error(what)
    , raw_response(std::move(raw))
  {
  }

  std::string raw_response;
};

/// A metric is mathematically undefined for the given labels.
class UndefinedMetricError : public Error
{
public:
  UndefinedMetricError(const std::string& metric, const std::string& what)
    : Error(metric + ": " + what)
    , metric_name(metric)
  {
  }

  std::string metric_name;
};

} // namespace semuq
