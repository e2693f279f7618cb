#pragma once

// Synthetic binary classification pools for the sample-efficiency and
// scaling benchmarks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "curatekit/store.hpp"

namespace curatekit {

struct TaskConfig {
  std::size_t clusters_per_class = 8;
  double separation = 6.0;      // class means along the label direction, in noise sigmas
  double cluster_spread = 4.0;  // sub-cluster offsets orthogonal to the label direction
  double label_noise = 0.0;     // flip probability for pool labels
  double holdout = 0.1;

  void validate() const {
    if (clusters_per_class == 0) throw ValidationError("task: clusters_per_class must be >= 1");
    if (!(separation >= 0.0) || !(cluster_spread >= 0.0)) throw ValidationError("task: negative geometry");
    if (!(label_noise >= 0.0 && label_noise <= 0.5)) throw ValidationError("task: label_noise must be in [0, 0.5]");
    if (!(holdout > 0.0 && holdout < 1.0)) throw ValidationError("task: holdout must be in (0, 1)");
  }
};

struct SyntheticTask {
  VectorPool pool;          // ids 0..n-1
  std::vector<int> labels;  // hidden pool labels (after noise)
  Matrix eval_vectors;
  std::vector<int> eval_labels;  // clean
};

/// Two classes, each a mixture of unit-variance Gaussian sub-clusters. Class
/// means sit at -separation/2 and +separation/2 along a random unit direction
/// u; sub-cluster offsets are orthogonal to u, so the Bayes boundary is linear.
inline SyntheticTask gen_synthetic(std::size_t n, std::size_t d, const TaskConfig& task, std::uint64_t seed) {
  task.validate();
  if (d == 0) throw ValidationError("gen_synthetic: dimension must be >= 1");
  if (n < 100) throw ValidationError("gen_synthetic: need N >= 100 for the held-out split");
  const auto n_eval = static_cast<std::size_t>(std::ceil(task.holdout * static_cast<double>(n)));
  if (n_eval < 2 || n_eval >= n) throw ValidationError("gen_synthetic: N too small for the held-out split");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> u(d);
  for (auto& v : u) v = g(rng);
  const double norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
  for (auto& v : u) v /= norm;

  // Sub-cluster offsets are shared by both classes, so only the projection
  // on u carries label information.
  const std::size_t k = task.clusters_per_class;
  std::vector<std::vector<double>> offsets(k, std::vector<double>(d));
  for (auto& mu : offsets) {
    for (auto& v : mu) v = g(rng) * task.cluster_spread / std::sqrt(static_cast<double>(d));
    const double along = std::inner_product(mu.begin(), mu.end(), u.begin(), 0.0);
    for (std::size_t j = 0; j < d; ++j) mu[j] -= along * u[j];
  }
  std::vector<std::vector<double>> centers(2 * k, std::vector<double>(d));
  for (std::size_t c = 0; c < 2 * k; ++c) {
    const double shift = (c < k ? -0.5 : 0.5) * task.separation;
    for (std::size_t j = 0; j < d; ++j) centers[c][j] = offsets[c % k][j] + shift * u[j];
  }

  std::uniform_int_distribution<std::size_t> pick(0, 2 * k - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](Matrix& m, std::vector<int>& labels, double noise) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const std::size_t c = pick(rng);
      auto row = m.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(centers[c][j] + g(rng));
      int y = c < k ? 0 : 1;
      if (noise > 0.0 && unif(rng) < noise) y = 1 - y;
      labels[i] = y;
    }
  };

  SyntheticTask t;
  t.pool.vectors = Matrix(n - n_eval, d);
  t.labels.resize(n - n_eval);
  draw(t.pool.vectors, t.labels, task.label_noise);
  t.eval_vectors = Matrix(n_eval, d);
  t.eval_labels.resize(n_eval);
  draw(t.eval_vectors, t.eval_labels, 0.0);
  return t;
}

/// Area under the ROC curve (Mann-Whitney; tied scores count one half).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        rank_sum += avg_rank;
        pos += 1.0;
      } else {
        neg += 1.0;
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0) throw ValidationError("roc_auc: need both classes");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

}  // namespace curatekit
