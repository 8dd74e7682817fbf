// Copyright 2026 The PSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSG_ERROR_HPP_
#define PSG_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace psg {

// Base of every error this library raises. The CLI maps the subclasses below
// onto its exit-status taxonomy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments or inconsistent shapes.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Missing or unreadable input files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input bytes that do not follow the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CountMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Configuration document problems; `key()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// A sampled Gaussian mechanism with zero noise and nonzero sampling rate has
// unbounded privacy loss.
class InfinitePrivacyCost : public Error {
 public:
  using Error::Error;
};

// The requested (epsilon, delta) cannot be met, or a run would overspend it.
class PrivacyInfeasible : public Error {
 public:
  using Error::Error;
};

class BudgetExhausted : public PrivacyInfeasible {
 public:
  using PrivacyInfeasible::PrivacyInfeasible;
};

// NaN or Inf showed up in a loss or tensor that must stay finite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Real training data reached a code path that is only allowed to see
// synthetic or test data.
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

}  // namespace psg

#endif  // PSG_ERROR_HPP_
