// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every servolnn module. The CLI maps these
// onto process exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace servolnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, invalid settings, or data that cannot satisfy a
/// requested mode.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse: unbound inputs, wrong argument kinds, missing fields.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses, singular systems, integrator step underflow.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace servolnn
