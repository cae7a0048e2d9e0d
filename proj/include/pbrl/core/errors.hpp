#pragma once

#include <stdexcept>
#include <string>

#include "pbrl/core/config.hpp"

PBRL_NAMESPACE_BEGIN

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct ActionError : Error {
  using Error::Error;
};
struct EpisodeError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct MetricError : Error {
  using Error::Error;
};

PBRL_NAMESPACE_END
