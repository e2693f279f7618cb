#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "curatekit/core.hpp"

namespace curatekit {

using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapF = Eigen::Map<const RowMatrixF>;

inline ConstMapF as_eigen(const Matrix& m) {
  return ConstMapF(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

inline ConstMapF rows_as_eigen(const Matrix& m, std::size_t begin, std::size_t end) {
  return ConstMapF(m.data() + begin * m.cols(), static_cast<Eigen::Index>(end - begin),
                   static_cast<Eigen::Index>(m.cols()));
}

/// Squared distances between row blocks via the GEMM expansion
/// |a|^2 + |b|^2 - 2 a.b, accumulated in double and clamped at zero.
inline RowMatrixD sq_distances_gemm(const RowMatrixD& a, const RowMatrixD& b) {
  const Eigen::VectorXd an = a.rowwise().squaredNorm();
  const Eigen::VectorXd bn = b.rowwise().squaredNorm();
  RowMatrixD d = -2.0 * (a * b.transpose());
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(0.0);
}

/// D[i][j] = ||A_i - B_j||_2. Passing the same matrix twice yields an exactly
/// symmetric result with a zero diagonal.
inline Matrix pairwise_distances(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() && !a.empty() && !b.empty()) {
    throw ValidationError("pairwise_distances: dim mismatch " + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.rows());
  if (a.empty() || b.empty()) return out;
  const RowMatrixD ad = as_eigen(a).cast<double>();
  const bool same = (&a == &b);
  const RowMatrixD d2 = same ? sq_distances_gemm(ad, ad) : sq_distances_gemm(ad, as_eigen(b).cast<double>());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = static_cast<float>(std::sqrt(d2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
  }
  if (same) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      out(i, i) = 0.0f;
      for (std::size_t j = i + 1; j < a.rows(); ++j) out(j, i) = out(i, j);
    }
  }
  return out;
}

/// For every row of `points`, the squared distance to its nearest row of
/// `centers` (infinity when `centers` is empty). Blocked to bound memory.
inline std::vector<double> min_sq_distances(const Matrix& points, const Matrix& centers,
                                            std::size_t block = 2048) {
  std::vector<double> out(points.rows(), std::numeric_limits<double>::infinity());
  if (centers.empty() || points.empty()) return out;
  if (points.cols() != centers.cols()) throw ValidationError("min_sq_distances: dim mismatch");
  const RowMatrixD cd = as_eigen(centers).cast<double>();
  for (std::size_t begin = 0; begin < points.rows(); begin += block) {
    const std::size_t end = std::min(points.rows(), begin + block);
    const RowMatrixD pd = rows_as_eigen(points, begin, end).cast<double>();
    const RowMatrixD d2 = sq_distances_gemm(pd, cd);
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = d2.row(static_cast<Eigen::Index>(i - begin)).minCoeff();
    }
  }
  return out;
}

/// Exact nearest-center assignment (ties to the lowest center index). A float
/// GEMM pass shortlists centers; the shortlist is rescored with l2_sq.
inline std::vector<std::uint32_t> assign_nearest(const Matrix& points, const Matrix& centers,
                                                 std::vector<double>* sq_dist = nullptr,
                                                 std::size_t block = 4096) {
  std::vector<std::uint32_t> assign(points.rows(), 0);
  if (sq_dist) sq_dist->assign(points.rows(), 0.0);
  if (points.empty()) return assign;
  if (centers.empty()) throw ValidationError("assign_nearest: no centers");
  if (points.cols() != centers.cols()) throw ValidationError("assign_nearest: dim mismatch");
  const auto c = as_eigen(centers);
  const Eigen::VectorXf cn = c.rowwise().squaredNorm();
  const float cn_max = cn.maxCoeff();
  for (std::size_t begin = 0; begin < points.rows(); begin += block) {
    const std::size_t end = std::min(points.rows(), begin + block);
    const auto p = rows_as_eigen(points, begin, end);
    const RowMatrixF ip = p * c.transpose();
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = static_cast<Eigen::Index>(i - begin);
      const float pn = p.row(r).squaredNorm();
      float best = std::numeric_limits<float>::infinity();
      for (Eigen::Index j = 0; j < c.rows(); ++j) best = std::min(best, cn[j] - 2.0f * ip(r, j));
      const float slack = 1e-5f * (pn + cn_max) + 1e-30f;
      double best_exact = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (Eigen::Index j = 0; j < c.rows(); ++j) {
        if (cn[j] - 2.0f * ip(r, j) > best + slack) continue;
        const double d = l2_sq(points.row(i), centers.row(static_cast<std::size_t>(j)));
        if (d < best_exact) {
          best_exact = d;
          arg = static_cast<std::uint32_t>(j);
        }
      }
      assign[i] = arg;
      if (sq_dist) (*sq_dist)[i] = best_exact;
    }
  }
  return assign;
}

}  // namespace curatekit
