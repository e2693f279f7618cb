#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace curatekit {

using Id = std::int64_t;

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Dense row-major float matrix. Rows are feature vectors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("matrix data length " + std::to_string(data_.size()) +
                            " != rows*cols " + std::to_string(rows_ * cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<float> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const float> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  float& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  float operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  const std::vector<float>& values() const noexcept { return data_; }
  std::vector<float>& values() noexcept { return data_; }

  void append_row(std::span<const float> r) {
    if (cols_ == 0 && rows_ == 0) cols_ = r.size();
    if (r.size() != cols_) throw ValidationError("row dimension mismatch");
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

inline bool all_finite(std::span<const float> v) noexcept {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Squared L2 distance with double accumulation over independent lanes.
inline double l2_sq(std::span<const float> a, std::span<const float> b) noexcept {
  constexpr std::size_t kLanes = 8;
  double acc[kLanes] = {};
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = static_cast<double>(a[i + l]) - static_cast<double>(b[i + l]);
      acc[l] += d * d;
    }
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    tail += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

/// Search hit: id and reported (non-squared) L2 distance.
struct Neighbor {
  Id id = 0;
  float distance = 0.0f;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

}  // namespace curatekit
