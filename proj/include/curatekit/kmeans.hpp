#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "curatekit/core.hpp"
#include "curatekit/distance.hpp"

namespace curatekit {

struct KMeansOptions {
  std::size_t k = 8;
  std::size_t iterations = 25;
  std::uint64_t seed = 1234;
};

struct KMeansResult {
  Matrix centroids;
  std::vector<std::uint32_t> assignment;
  // Mean squared distance of each training point to its assigned centroid,
  // after the final centroid update.
  double distortion = 0.0;
};

/// k-means++ seeding; returns row indices of the chosen seeds. Optional
/// per-point weights scale the D^2 sampling mass. Large inputs are seeded from
/// a uniform subsample of max(16k, 4096) rows.
inline std::vector<std::size_t> kmeanspp_seeds(const Matrix& points, std::size_t k, std::mt19937_64& rng,
                                               std::span<const double> weights = {}) {
  const std::size_t total_rows = points.rows();
  if (k == 0 || k > total_rows) throw ValidationError("kmeans++: need 1 <= k <= n");

  std::vector<std::size_t> rows(total_rows);
  std::iota(rows.begin(), rows.end(), 0);
  const std::size_t cap = std::max<std::size_t>(16 * k, 4096);
  if (total_rows > cap) {
    for (std::size_t i = 0; i < cap; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, total_rows - 1);
      std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(cap);
    std::sort(rows.begin(), rows.end());
  }
  const std::size_t n = rows.size();
  RowMatrixF x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(points.cols()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = points.row(rows[i]);
    std::copy(r.begin(), r.end(), x.row(static_cast<Eigen::Index>(i)).data());
  }
  const Eigen::VectorXf xn = x.rowwise().squaredNorm();
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[rows[i]]; };

  std::vector<std::size_t> seeds;
  seeds.reserve(k);
  {
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i) mass[i] = w(i);
    std::discrete_distribution<std::size_t> pick(mass.begin(), mass.end());
    seeds.push_back(pick(rng));
  }
  // Sampling mass only: float GEMV accuracy is sufficient.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  auto absorb = [&](std::size_t s) {
    const auto si = static_cast<Eigen::Index>(s);
    const Eigen::VectorXf ip = x * x.row(si).transpose();
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double d = std::max(0.0f, xn[ii] + xn[si] - 2.0f * ip[ii]);
      d2[i] = std::min(d2[i], i == s ? 0.0 : d);
    }
  };
  absorb(seeds[0]);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<char> used(n, 0);
  used[seeds[0]] = 1;
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += w(i) * d2[i];
    std::size_t next = n;
    if (total > 0.0) {
      double target = unif(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= w(i) * d2[i];
        if (target < 0.0 && !used[i]) {
          next = i;
          break;
        }
      }
    }
    if (next == n) {
      // No mass left: take the first unused row.
      next = 0;
      while (next < n && used[next]) ++next;
      if (next == n) break;
    }
    used[next] = 1;
    seeds.push_back(next);
    absorb(next);
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  for (auto s : seeds) out.push_back(rows[s]);
  // k > subsample size cannot happen (cap >= 16k), but duplicates of exhausted
  // inputs are padded with the first seeds.
  while (out.size() < k) out.push_back(out[out.size() % seeds.size()]);
  return out;
}

namespace detail {

inline double update_centroids(const Matrix& points, std::span<const double> weights,
                               const std::vector<std::uint32_t>& assign, Matrix& centroids) {
  const std::size_t k = centroids.rows();
  const std::size_t d = points.cols();
  std::vector<double> sums(k * d, 0.0);
  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    const auto row = points.row(i);
    double* s = sums.data() + assign[i] * d;
    for (std::size_t j = 0; j < d; ++j) s[j] += wi * row[j];
    mass[assign[i]] += wi;
  }
  std::size_t empty = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (mass[c] <= 0.0) {
      ++empty;
      continue;
    }
    for (std::size_t j = 0; j < d; ++j) {
      centroids(c, j) = static_cast<float>(sums[c * d + j] / mass[c]);
    }
  }
  return static_cast<double>(empty);
}

// Moves each empty centroid onto the point currently farthest from its
// centroid; deterministic.
inline void reseed_empty(const Matrix& points, std::vector<std::uint32_t>& assign, Matrix& centroids) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assign) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    double worst = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[assign[i]] <= 1) continue;
      const double d = l2_sq(points.row(i), centroids.row(assign[i]));
      if (d > worst) {
        worst = d;
        arg = i;
      }
    }
    if (worst < 0.0) continue;
    --counts[assign[arg]];
    assign[arg] = static_cast<std::uint32_t>(c);
    ++counts[c];
    std::copy(points.row(arg).begin(), points.row(arg).end(), centroids.row(c).begin());
  }
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding and a fixed iteration budget.
inline KMeansResult kmeans(const Matrix& points, const KMeansOptions& opt,
                           std::span<const double> weights = {}) {
  const std::size_t n = points.rows();
  if (opt.k == 0 || opt.k > n) {
    throw ValidationError("kmeans: k=" + std::to_string(opt.k) + " needs at least k points, have " +
                          std::to_string(n));
  }
  std::mt19937_64 rng(opt.seed);
  KMeansResult res;
  res.centroids = Matrix(opt.k, points.cols());
  const auto seeds = kmeanspp_seeds(points, opt.k, rng, weights);
  for (std::size_t c = 0; c < opt.k; ++c) {
    std::copy(points.row(seeds[c]).begin(), points.row(seeds[c]).end(), res.centroids.row(c).begin());
  }
  const std::size_t iters = std::max<std::size_t>(opt.iterations, 1);
  for (std::size_t it = 0; it < iters; ++it) {
    res.assignment = assign_nearest(points, res.centroids);
    detail::reseed_empty(points, res.assignment, res.centroids);
    detail::update_centroids(points, weights, res.assignment, res.centroids);
  }
  double total = 0.0;
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    total += wi * l2_sq(points.row(i), res.centroids.row(res.assignment[i]));
    mass += wi;
  }
  res.distortion = mass > 0.0 ? total / mass : 0.0;
  return res;
}

struct MiniBatchOptions {
  std::size_t k = 8;
  std::size_t batch_size = 256;
  std::size_t iterations = 100;
  std::uint64_t seed = 1234;
};

/// Mini-batch k-means with per-center learning rates 1/count.
inline KMeansResult minibatch_kmeans(const Matrix& points, const MiniBatchOptions& opt) {
  const std::size_t n = points.rows();
  if (opt.k == 0 || opt.k > n) throw ValidationError("minibatch_kmeans: need 1 <= k <= n");
  std::mt19937_64 rng(opt.seed);
  KMeansResult res;
  res.centroids = Matrix(opt.k, points.cols());
  const auto seeds = kmeanspp_seeds(points, opt.k, rng);
  for (std::size_t c = 0; c < opt.k; ++c) {
    std::copy(points.row(seeds[c]).begin(), points.row(seeds[c]).end(), res.centroids.row(c).begin());
  }
  std::vector<double> counts(opt.k, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t batch = std::min(opt.batch_size, n);
  Matrix sample(batch, points.cols());
  std::vector<std::size_t> rows(batch);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    for (std::size_t b = 0; b < batch; ++b) {
      rows[b] = pick(rng);
      std::copy(points.row(rows[b]).begin(), points.row(rows[b]).end(), sample.row(b).begin());
    }
    const auto assign = assign_nearest(sample, res.centroids);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto c = assign[b];
      counts[c] += 1.0;
      const double eta = 1.0 / counts[c];
      auto cr = res.centroids.row(c);
      const auto x = sample.row(b);
      for (std::size_t j = 0; j < cr.size(); ++j) {
        cr[j] = static_cast<float>((1.0 - eta) * cr[j] + eta * x[j]);
      }
    }
  }
  res.assignment = assign_nearest(points, res.centroids);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += l2_sq(points.row(i), res.centroids.row(res.assignment[i]));
  res.distortion = total / static_cast<double>(n);
  return res;
}

}  // namespace curatekit
