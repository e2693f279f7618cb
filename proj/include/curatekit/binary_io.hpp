#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "curatekit/core.hpp"

namespace curatekit {

/// Little-endian binary writer for versioned model files.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }

  void magic(const std::array<char, 8>& m) { out_.write(m.data(), m.size()); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void scalar(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void vec(const std::vector<T>& v) {
    scalar<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }

  void matrix(const Matrix& m) {
    scalar<std::uint64_t>(m.rows());
    scalar<std::uint64_t>(m.cols());
    out_.write(reinterpret_cast<const char*>(m.data()),
               static_cast<std::streamsize>(m.rows() * m.cols() * sizeof(float)));
  }

  void finish() {
    out_.close();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  void expect_magic(const std::array<char, 8>& m) {
    std::array<char, 8> got{};
    in_.read(got.data(), got.size());
    if (!in_ || got != m) throw ValidationError(path_.string() + ": bad magic");
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T scalar() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw ValidationError(path_.string() + ": truncated file");
    return v;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  std::vector<T> vec(std::uint64_t max_elems = std::uint64_t{1} << 36) {
    const auto n = scalar<std::uint64_t>();
    if (n > max_elems) throw ValidationError(path_.string() + ": implausible array length");
    std::vector<T> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) throw ValidationError(path_.string() + ": truncated file");
    return v;
  }

  Matrix matrix() {
    const auto rows = scalar<std::uint64_t>();
    const auto cols = scalar<std::uint64_t>();
    if (cols != 0 && rows > (std::uint64_t{1} << 36) / cols) {
      throw ValidationError(path_.string() + ": implausible matrix shape");
    }
    std::vector<float> data(rows * cols);
    in_.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in_) throw ValidationError(path_.string() + ": truncated file");
    return Matrix(rows, cols, std::move(data));
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw ValidationError(path_.string() + ": trailing bytes");
    }
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace curatekit
