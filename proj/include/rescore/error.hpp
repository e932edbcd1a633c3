// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rescore {

/// Process exit codes used by the command line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kMissingDependency = 3,
  kData = 4,
  kInternal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid flags, hyperparameters or preconditions on caller-supplied values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// An upstream artifact is missing; the message names the producing command.
class MissingDependency : public Error {
 public:
  explicit MissingDependency(const std::string& what)
      : Error(ExitCode::kMissingDependency, what) {}
};

/// Malformed input data (bad JSON line, corrupt checkpoint, out-of-range id).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

}  // namespace rescore
