/*
 * Copyright (c) 2026 The unilabel Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace unilabel {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  EmptyBatch() : Error("empty batch") {}
};

class ZeroVector : public Error {
 public:
  ZeroVector() : Error("cannot normalize a near-zero vector") {}
};

/// The inner gradient of a hypergradient computation was built without
/// `create_graph`, so the second-order path is missing.
class MissingSecondOrderGraph : public Error {
 public:
  MissingSecondOrderGraph()
      : Error("inner gradient is not graph-connected; rebuild it with create_graph") {}
};

class MissingLabel : public Error {
 public:
  explicit MissingLabel(long long id)
      : Error("no corrected label for sample id " + std::to_string(id)), id_(id) {}
  long long id() const noexcept { return id_; }

 private:
  long long id_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TruthUnavailable : public Error {
 public:
  TruthUnavailable() : Error("dataset carries no ground-truth unimodal sentiments") {}
};

}  // namespace unilabel
