// Copyright 2026 The offab Authors
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

#ifndef OFFAB_ERROR_HPP
#define OFFAB_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace offab {

/// Base class of every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, hyperparameter assignment or argument.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A log file line failed to parse or violated a record invariant.
class IngestError : public Error {
 public:
  IngestError(std::string path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), path_(std::move(path)), line_(line) {}

  [[nodiscard]] const std::string& path() const noexcept { return path_; }
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

/// Estimator could not produce a value (empty window, zero normalizer).
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure in the results store or an output file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace offab

#endif  // OFFAB_ERROR_HPP
