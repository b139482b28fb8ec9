// Copyright (c) 2026, The uqdet Authors. All rights reserved.
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

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace uqdet {

/// Coarse failure classes. The CLI maps these onto its exit codes.
enum class ErrorKind {
  kInvalidArgument,  // caller passed something outside the documented domain
  kIo,
  kParse,
  kIntegrity,  // dangling or duplicate references
  kFormat,     // wrong magic, version or dimension
  kCorruption,  // truncated payload, bad checksum
  kDegenerateRegion,
  kMissingData,
  kUnknownClass,
  kSingularModel,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& w)
      : Error(ErrorKind::kInvalidArgument, w) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& w) : Error(ErrorKind::kIo, w) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& w, std::size_t offset)
      : Error(ErrorKind::kParse, w), offset_(offset) {}

  /// Byte offset (JSON) or 1-based line number (text formats).
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& w, std::vector<std::uint64_t> ids)
      : Error(ErrorKind::kIntegrity, w), ids_(std::move(ids)) {}

  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::uint64_t> ids_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& w) : Error(ErrorKind::kFormat, w) {}
};

class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& w)
      : Error(ErrorKind::kCorruption, w) {}
};

class DegenerateRegionError : public Error {
 public:
  explicit DegenerateRegionError(const std::string& w)
      : Error(ErrorKind::kDegenerateRegion, w) {}
};

class MissingDataError : public Error {
 public:
  MissingDataError(const std::string& w, std::vector<std::uint64_t> ids)
      : Error(ErrorKind::kMissingData, w), ids_(std::move(ids)) {}

  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::uint64_t> ids_;
};

class UnknownClassError : public Error {
 public:
  UnknownClassError(const std::string& w, std::vector<std::uint64_t> ids)
      : Error(ErrorKind::kUnknownClass, w), ids_(std::move(ids)) {}

  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::uint64_t> ids_;
};

class SingularModelError : public Error {
 public:
  SingularModelError(const std::string& w, double min_eigenvalue)
      : Error(ErrorKind::kSingularModel, w), min_eigenvalue_(min_eigenvalue) {}

  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

namespace detail {

template <typename Range>
std::string join_ids(const Range& ids, std::size_t limit = 20) {
  std::ostringstream os;
  std::size_t n = 0;
  for (const auto& id : ids) {
    if (n == limit) {
      os << ", ...";
      break;
    }
    if (n++ > 0) os << ", ";
    os << id;
  }
  return os.str();
}

}  // namespace detail
}  // namespace uqdet
