// Copyright 2026 The mlplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLPLAB_ERRORS_HPP
#define MLPLAB_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mlplab {

/// File contents violate an expected binary or text layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two inputs that must agree with each other do not.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Underlying read/write failed or ended early.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training could not proceed (e.g. the loss diverged).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An experiment spec or CLI configuration is invalid.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Estimator fitting failed (e.g. a class with too few samples).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An object was used before it was put into a valid state.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested operation does not apply to this configuration.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Path enumeration refused because the total path count exceeds the budget.
class PathBudgetError : public std::runtime_error {
 public:
  PathBudgetError(const std::string& msg, std::uint64_t count)
      : std::runtime_error(msg), path_count(count) {}
  std::uint64_t path_count;
};

}  // namespace mlplab

#endif  // MLPLAB_ERRORS_HPP
