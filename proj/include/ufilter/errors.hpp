#pragma once

#include <stdexcept>
#include <string>

namespace ufilter {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The observed symbol has zero predictive probability under the model, so
/// the Bayes update is undefined.
class DegenerateObservation : public Error {
 public:
  using Error::Error;
};

/// Every cell of a penalty surface became +inf: the observations are
/// impossible under every model that is not already excluded.
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// An enumeration (exact tree, observation tree, kappa-state table, policy
/// space) would exceed its configured size cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

/// Malformed input: a matrix is not stochastic, an index is out of range,
/// a configuration field is missing.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ufilter
