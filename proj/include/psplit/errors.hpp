// Copyright 2026 The psplit Authors
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

#ifndef PSPLIT_ERRORS_HPP_
#define PSPLIT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace psplit {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: shapes, ranges, invalid distributions, bad file records.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Mathematical domain violation such as a KL support mismatch.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid hyper-parameters or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A search or enumeration exceeded its budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace psplit

#endif  // PSPLIT_ERRORS_HPP_
