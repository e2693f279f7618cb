#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "curatekit/core.hpp"
#include "curatekit/kmeans.hpp"

namespace curatekit {

/// Product quantizer: the vector is split into `m` sub-vectors, each encoded
/// as the index of its nearest sub-centroid (2^bits per sub-space).
class ProductQuantizer {
 public:
  ProductQuantizer() = default;
  ProductQuantizer(std::size_t dim, std::size_t m, std::size_t bits) : dim_(dim), m_(m), bits_(bits) {
    if (m == 0 || dim % m != 0) {
      throw ValidationError("pq_m=" + std::to_string(m) + " does not divide dim=" + std::to_string(dim));
    }
    if (bits != 4 && bits != 8) throw ValidationError("pq_bits must be 4 or 8");
    if ((m * bits) % 8 != 0) throw ValidationError("pq_m*pq_bits must be a whole number of bytes");
    dsub_ = dim / m;
    codebooks_.assign(m_ * ksub() * dsub_, 0.0f);
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t bits() const noexcept { return bits_; }
  std::size_t ksub() const noexcept { return std::size_t{1} << bits_; }
  std::size_t dsub() const noexcept { return dsub_; }
  /// Bytes per encoded vector: m * bits / 8.
  std::size_t code_size() const noexcept { return m_ * bits_ / 8; }
  const std::vector<float>& codebooks() const noexcept { return codebooks_; }
  std::vector<float>& codebooks() noexcept { return codebooks_; }

  std::span<const float> centroid(std::size_t sub, std::size_t code) const noexcept {
    return {codebooks_.data() + (sub * ksub() + code) * dsub_, dsub_};
  }

  /// Trains per-sub-space codebooks; returns the mean squared quantization
  /// error of the training set (summed over sub-spaces).
  double train(const Matrix& x, std::size_t iterations, std::uint64_t seed) {
    if (x.cols() != dim_) throw ValidationError("pq train: dim mismatch");
    if (x.rows() == 0) throw ValidationError("pq train: empty training set");
    double total = 0.0;
    for (std::size_t s = 0; s < m_; ++s) {
      Matrix sub(x.rows(), dsub_);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i).subspan(s * dsub_, dsub_);
        std::copy(r.begin(), r.end(), sub.row(i).begin());
      }
      // Fewer distinct training rows than ksub: duplicate seeds are harmless.
      const std::size_t k = std::min(ksub(), sub.rows());
      const auto res = kmeans(sub, {.k = k, .iterations = iterations, .seed = seed + s});
      for (std::size_t c = 0; c < ksub(); ++c) {
        const auto src = res.centroids.row(c % k);
        std::copy(src.begin(), src.end(), codebooks_.begin() + static_cast<std::ptrdiff_t>((s * ksub() + c) * dsub_));
      }
      total += res.distortion;
    }
    return total;
  }

  void encode(std::span<const float> v, std::span<std::uint8_t> code) const {
    std::fill(code.begin(), code.end(), std::uint8_t{0});
    for (std::size_t s = 0; s < m_; ++s) {
      const auto sv = v.subspan(s * dsub_, dsub_);
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < ksub(); ++c) {
        const double d = l2_sq(sv, centroid(s, c));
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      put(code, s, arg);
    }
  }

  /// Encodes every row; same codes as encode() row by row.
  std::vector<std::uint8_t> encode_batch(const Matrix& x) const {
    std::vector<std::uint8_t> codes(x.rows() * code_size(), 0);
    Matrix sub(x.rows(), dsub_);
    Matrix book(ksub(), dsub_);
    for (std::size_t s = 0; s < m_; ++s) {
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i).subspan(s * dsub_, dsub_);
        std::copy(r.begin(), r.end(), sub.row(i).begin());
      }
      for (std::size_t c = 0; c < ksub(); ++c) {
        const auto cr = centroid(s, c);
        std::copy(cr.begin(), cr.end(), book.row(c).begin());
      }
      const auto assign = assign_nearest(sub, book);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        put(std::span<std::uint8_t>(codes.data() + i * code_size(), code_size()), s, assign[i]);
      }
    }
    return codes;
  }

  void decode(std::span<const std::uint8_t> code, std::span<float> out) const {
    for (std::size_t s = 0; s < m_; ++s) {
      const auto c = centroid(s, get(code, s));
      std::copy(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(s * dsub_));
    }
  }

  /// Table of squared distances from each query sub-vector to each sub-centroid.
  std::vector<float> distance_table(std::span<const float> q) const {
    std::vector<float> table(m_ * ksub());
    for (std::size_t s = 0; s < m_; ++s) {
      const auto sq = q.subspan(s * dsub_, dsub_);
      for (std::size_t c = 0; c < ksub(); ++c) {
        table[s * ksub() + c] = static_cast<float>(l2_sq(sq, centroid(s, c)));
      }
    }
    return table;
  }

  float table_distance(std::span<const float> table, std::span<const std::uint8_t> code) const {
    float acc = 0.0f;
    for (std::size_t s = 0; s < m_; ++s) acc += table[s * ksub() + get(code, s)];
    return acc;
  }

  std::size_t get(std::span<const std::uint8_t> code, std::size_t sub) const noexcept {
    if (bits_ == 8) return code[sub];
    const std::uint8_t b = code[sub / 2];
    return (sub % 2 == 0) ? (b & 0x0F) : (b >> 4);
  }

 private:
  void put(std::span<std::uint8_t> code, std::size_t sub, std::size_t value) const noexcept {
    if (bits_ == 8) {
      code[sub] = static_cast<std::uint8_t>(value);
    } else if (sub % 2 == 0) {
      code[sub / 2] = static_cast<std::uint8_t>((code[sub / 2] & 0xF0) | (value & 0x0F));
    } else {
      code[sub / 2] = static_cast<std::uint8_t>((code[sub / 2] & 0x0F) | ((value & 0x0F) << 4));
    }
  }

  std::size_t dim_ = 0;
  std::size_t m_ = 0;
  std::size_t bits_ = 8;
  std::size_t dsub_ = 0;
  std::vector<float> codebooks_;
};

}  // namespace curatekit
