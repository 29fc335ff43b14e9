// Copyright 2026 The pcda Authors. All Rights Reserved.
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

#pragma once

#include <stdexcept>
#include <string>

namespace pcda {

// Base class for every error raised by the library. The exit code is what the
// command line driver returns when the error escapes a stage.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Malformed or contradictory configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

// An upstream artifact is absent or no longer matches its recorded hash.
class ArtifactError : public Error {
 public:
  explicit ArtifactError(const std::string& what) : Error(what, 3) {}
};

// Loss or parameter went non-finite.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, 4) {}
};

// Input violates an operation's precondition (shape, dimension, range).
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(what, 1) {}
};

// On-disk dataset failed validation. `kind` names the failed check.
class ValidationError : public Error {
 public:
  enum class Kind { kMissingFile, kDanglingReference, kAlignment, kSchema, kSplitOverlap };

  ValidationError(Kind kind, const std::string& what) : Error(what, 1), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace pcda
