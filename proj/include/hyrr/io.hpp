// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "hyrr/common.hpp"

namespace hyrr::io {

// Little-endian binary streams for the index and parameter files. Values are
// written as raw IEEE-754 / two's complement so reloads are bit-exact.

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.write(buf, sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_span(std::span<const T> values) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  }

  void put_string(std::string_view s);
  /// Writes exactly `magic.size()` bytes.
  void put_magic(std::string_view magic);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value;
    read_raw(&value, sizeof(T));
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_span(std::span<T> values) {
    read_raw(values.data(), values.size_bytes());
  }

  std::string get_string();
  /// Throws Error unless the next bytes equal `magic`.
  void expect_magic(std::string_view magic);
  /// Throws Error unless the stream is fully consumed.
  void expect_end();

 private:
  void read_raw(void* dst, std::size_t n);

  std::filesystem::path path_;
  std::ifstream in_;
};

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);
/// Hex SHA-256 of a byte string.
std::string sha256_bytes(std::string_view bytes);

/// Writes text atomically enough for our purposes (truncate + write).
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace hyrr::io
