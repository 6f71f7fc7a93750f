// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ld3m {

// Every failure raised by the library derives from Error so callers can catch
// broadly; the CLI maps specific subclasses onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ContractError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ReplayError : Error {
  using Error::Error;
};

struct DegenerateInputError : Error {
  using Error::Error;
};

// Training diverged (non-finite loss) during pretraining or expert runs.
struct TrainingError : Error {
  using Error::Error;
};

// A distillation precondition (autoencoder quality, expert buffer) failed.
struct GateError : Error {
  using Error::Error;
};

// Non-finite loss inside the distillation loop.
struct NumericAbort : Error {
  NumericAbort(const std::string& what, std::string dump)
      : Error(what), dump_path(std::move(dump)) {}
  std::string dump_path;
};

struct CorruptFileError : Error {
  using Error::Error;
};

}  // namespace ld3m
