// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kdepth {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or an input that violates a layer's size contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Value outside an op's mathematical domain (log of a non-positive number, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid op parameter such as a non-positive stride.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt file, bad magic, truncation or architecture fingerprint mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Training-loop ordering violated (e.g. ghost decoder used before the per-iteration copy).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace kdepth
