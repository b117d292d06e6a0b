// Copyright 2026 The speechkd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPEECHKD_ERROR_HPP_
#define SPEECHKD_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace speechkd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (fully masked row, bad index, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced, or a non-deterministic function under gradient check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Configuration or dataset validation failure. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor file container errors.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeOverflowError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace speechkd

#endif  // SPEECHKD_ERROR_HPP_
