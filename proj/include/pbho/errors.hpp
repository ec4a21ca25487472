// Copyright 2026 The pbho Authors.
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

#ifndef PBHO_ERRORS_HPP_
#define PBHO_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace pbho {

// Root of the library's exception hierarchy. The CLI maps subclasses to
// exit codes (ConfigError -> 1, DatasetError -> 3, everything else -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf showed up in a value that must be finite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Precondition on a numeric argument violated (negative variance, bad eps...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Misuse of the differentiation tape: wrong tape, non-scalar output, etc.
class TapeError : public Error {
 public:
  using Error::Error;
};

// A step size or epoch budget would void the differential-privacy certificate.
class PrivacyViolation : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

// Configuration could not be parsed or validated. `field` names the offending
// key path, e.g. "hyperopt.zeta".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace pbho

#endif  // PBHO_ERRORS_HPP_
