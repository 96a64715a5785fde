#pragma once

#include <stdexcept>
#include <string>

namespace optbpx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedParams : public Error {
 public:
  using Error::Error;
};

class IndefiniteOperator : public Error {
 public:
  using Error::Error;
};

class HyperbolicRegime : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

class UnsupportedBC : public Error {
 public:
  using Error::Error;
};

class NonpositiveDiagonal : public Error {
 public:
  using Error::Error;
};

class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

class NonfiniteLoss : public Error {
 public:
  using Error::Error;
};

class ZeroRho : public Error {
 public:
  using Error::Error;
};

/// Schema violation while reading a JSON config; the message names the field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace optbpx
