// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Exception taxonomy shared by all modules.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace jgseg {

// Bad values passed to an operation (shape mismatch, out-of-range class id, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

// Filesystem / serialization problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint written by a newer (or unknown) schema.
class UnsupportedSchema : public IoError {
 public:
  explicit UnsupportedSchema(const std::string& what) : IoError(what) {}
};

// Checkpoint payload does not match its manifest.
class CorruptCheckpoint : public IoError {
 public:
  explicit CorruptCheckpoint(const std::string& what) : IoError(what) {}
};

// A documented API contract was violated by the caller (e.g. gradients
// reached a frozen parameter group).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Config file / override errors. Carries the offending key when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A subcommand was invoked without a required input artifact.
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

// Test-time optimization produced a non-finite loss. Carries the loss trace
// accumulated up to the failure so callers can inspect it.
class DivergedInversion : public std::runtime_error {
 public:
  DivergedInversion(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace jgseg
