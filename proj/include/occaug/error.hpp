// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace occaug {

// Base for every error the toolkit throws. The CLI maps ValidationError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (JSON, CSV, config, RLE strings).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input is well-formed but violates a data contract.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A backend was asked for something it does not support.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Backend transport or execution failure.
class BackendError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace occaug
