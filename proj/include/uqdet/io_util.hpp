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

// Little-endian binary encoding, checksums, file helpers and
// round-trip-exact decimal formatting shared by every on-disk format.

#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "uqdet/error.hpp"

namespace uqdet::io {

template <typename T>
T byteswap_if_big(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    std::memcpy(&v, b.data(), sizeof(T));
  }
  return v;
}

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    v = byteswap_if_big(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }

  template <typename T>
  void put_all(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const char*>(values.data());
      buf_.insert(buf_.end(), p, p + values.size_bytes());
    } else {
      for (T v : values) put(v);
    }
  }

  const std::vector<char>& buffer() const noexcept { return buf_; }
  std::size_t size() const noexcept { return buf_.size(); }

 private:
  std::vector<char> buf_;
};

/// Bounds-checked cursor over an in-memory file image. Any read past the
/// end raises CorruptionError naming `what`.
class ByteReader {
 public:
  ByteReader(std::span<const char> data, std::string what)
      : data_(data), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n) {
    require(n);
    std::string_view s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    require(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(v);
  }

  template <typename T>
  void get_all(std::span<T> out) {
    if (out.size() > remaining() / sizeof(T)) fail(out.size() * sizeof(T));
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
      pos_ += out.size_bytes();
    } else {
      for (auto& v : out) v = get<T>();
    }
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (n > remaining()) fail(n);
  }

  [[noreturn]] void fail(std::size_t n) const {
    throw CorruptionError(what_ + ": truncated payload (needed " +
                          std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + ", " +
                          std::to_string(remaining()) + " remain)");
  }

  std::span<const char> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(std::span<const char> data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<char> data((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return data;
}

/// Writes through a sibling temp file and renames, so readers never see a
/// half-written output.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::span<const char> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failure on " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

/// Shortest decimal that parses back to the identical double.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace uqdet::io
