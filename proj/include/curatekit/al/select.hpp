#pragma once

// Batch acquisition: K-Center greedy over a sampled candidate pool, and the
// localized strategies that score only an ANN neighborhood of the labeled set.

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "curatekit/al/probe.hpp"
#include "curatekit/ann/index.hpp"
#include "curatekit/kmeans.hpp"

namespace curatekit {

enum class Strategy { KCenter, KCenterFull, Margin, Entropy, Representative, InformativeClusterDiverse, Random };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::KCenter: return "kcenter";
    case Strategy::KCenterFull: return "kcenter-full";
    case Strategy::Margin: return "margin";
    case Strategy::Entropy: return "entropy";
    case Strategy::Representative: return "representative";
    case Strategy::InformativeClusterDiverse: return "icd";
    case Strategy::Random: return "random";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  for (auto v : {Strategy::KCenter, Strategy::KCenterFull, Strategy::Margin, Strategy::Entropy,
                 Strategy::Representative, Strategy::InformativeClusterDiverse, Strategy::Random}) {
    if (s == to_string(v)) return v;
  }
  if (s == "informative-cluster-diverse") return Strategy::InformativeClusterDiverse;
  throw ValidationError("unknown strategy '" + std::string(s) + "'");
}

inline bool is_localized(Strategy s) {
  return s == Strategy::Margin || s == Strategy::Entropy || s == Strategy::Representative ||
         s == Strategy::InformativeClusterDiverse;
}

struct AlConfig {
  Strategy strategy = Strategy::KCenter;
  std::size_t batch_size = 100;
  std::size_t candidate_pool_size = 10000;  // N_c
  std::size_t neighborhood_size = 1000;     // K_s
  std::uint64_t seed = 1234;
  bool per_class_centroids = false;
  std::size_t widen_retries = 3;

  void validate() const {
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (strategy == Strategy::KCenter && batch_size > candidate_pool_size) {
      throw ValidationError("batch size exceeds candidate pool size");
    }
    if (is_localized(strategy) && batch_size > neighborhood_size) {
      throw ValidationError("batch size exceeds neighborhood size");
    }
  }
};

struct Selection {
  std::vector<Id> ids;
  std::vector<double> scores;  // acquisition score per selected id
  bool partial = false;        // fewer than B candidates were available
  std::size_t scored = 0;      // vectors passed through the probe
  std::size_t neighborhood = 0;
};

struct Candidates {
  std::vector<Id> ids;
  Matrix vectors;
};

namespace detail {

inline std::unordered_set<Id> id_set(const std::vector<Id>& ids) { return {ids.begin(), ids.end()}; }

// Top-n positions by descending score, ties to the lowest id.
inline std::vector<std::size_t> top_by_score(const std::vector<double>& score, const std::vector<Id>& ids,
                                             std::size_t n) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  n = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return score[a] != score[b] ? score[a] > score[b] : ids[a] < ids[b];
                    });
  order.resize(n);
  return order;
}

}  // namespace detail

/// Uniform sample, without replacement, of up to `want` index ids not in
/// `labeled`. Expected cost O(want) while unlabeled ids dominate the index.
inline std::vector<Id> sample_unlabeled(const AnnIndex& index, const std::unordered_set<Id>& labeled,
                                        std::size_t want, std::mt19937_64& rng) {
  std::size_t labeled_in = 0;
  for (Id id : labeled) labeled_in += index.contains(id) ? 1 : 0;
  const std::size_t remaining = index.size() - labeled_in;
  want = std::min(want, remaining);
  std::vector<Id> out;
  out.reserve(want);
  if (want * 2 >= remaining) {
    std::vector<Id> all;
    all.reserve(remaining);
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (!labeled.contains(index.id_at(r))) all.push_back(index.id_at(r));
    }
    for (std::size_t i = 0; i < want; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
      out.push_back(all[i]);
    }
    return out;
  }
  std::unordered_set<std::size_t> drawn;
  drawn.reserve(want * 2);
  std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
  while (out.size() < want) {
    const std::size_t r = pick(rng);
    const Id id = index.id_at(r);
    if (labeled.contains(id) || !drawn.insert(r).second) continue;
    out.push_back(id);
  }
  return out;
}

/// The candidate pool K-Center draws for one round.
inline std::vector<Id> kcenter_candidates(const AnnIndex& index, const LabeledPool& labeled, std::size_t n_c,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_unlabeled(index, detail::id_set(labeled.ids), n_c, rng);
}

/// Greedy max-min selection of `b` rows of `vectors` against `centers`
/// (ties to the lowest id). Score is the min distance at selection time.
inline Selection kcenter_greedy(const std::vector<Id>& ids, const Matrix& vectors, const Matrix& centers,
                                std::size_t b) {
  Selection sel;
  const std::size_t n = ids.size();
  std::vector<double> mind;
  if (centers.empty()) {
    mind.assign(n, std::numeric_limits<double>::infinity());
  } else {
    assign_nearest(vectors, centers, &mind);
  }
  std::vector<char> taken(n, 0);
  const std::size_t picks = std::min(b, n);
  for (std::size_t s = 0; s < picks; ++s) {
    std::size_t arg = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (arg == n || mind[i] > mind[arg] || (mind[i] == mind[arg] && ids[i] < ids[arg])) arg = i;
    }
    taken[arg] = 1;
    sel.ids.push_back(ids[arg]);
    sel.scores.push_back(std::sqrt(mind[arg]));
    const auto p = vectors.row(arg);
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) mind[i] = std::min(mind[i], l2_sq(vectors.row(i), p));
    }
  }
  sel.partial = picks < b;
  return sel;
}

inline Selection kcenter_select(const AnnIndex& index, const LabeledPool& labeled, const AlConfig& cfg) {
  const std::size_t n_c = cfg.strategy == Strategy::KCenterFull ? index.size() : cfg.candidate_pool_size;
  const auto ids = kcenter_candidates(index, labeled, n_c, cfg.seed);
  if (ids.empty()) throw ValidationError("kcenter: unlabeled pool is empty");
  const Matrix cand = index.reconstruct_batch(ids);
  const Matrix centers = index.reconstruct_batch(labeled.ids);
  return kcenter_greedy(ids, cand, centers, cfg.batch_size);
}

/// Unlabeled ids in the ANN neighborhood of the labeled centroid (or of each
/// class centroid), with reconstructed vectors.
inline Candidates localized_candidates(const AnnIndex& index, const LabeledPool& labeled, std::size_t k_s,
                                       bool per_class = false) {
  if (labeled.size() == 0) throw ValidationError("localized_candidates: labeled pool is empty");
  if (k_s == 0) throw ValidationError("localized_candidates: neighborhood size must be positive");
  k_s = std::min(k_s, index.size());
  const Matrix lv = index.reconstruct_batch(labeled.ids);
  std::map<int, std::vector<std::size_t>> groups;
  if (per_class) {
    for (std::size_t i = 0; i < labeled.size(); ++i) groups[labeled.labels[i]].push_back(i);
  } else {
    auto& all = groups[0];
    all.resize(labeled.size());
    std::iota(all.begin(), all.end(), 0);
  }
  const auto known = detail::id_set(labeled.ids);
  std::unordered_set<Id> seen;
  Candidates out;
  for (const auto& [label, rows] : groups) {
    std::vector<double> acc(index.dim(), 0.0);
    for (auto r : rows) {
      const auto v = lv.row(r);
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
    }
    std::vector<float> q(acc.size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = static_cast<float>(acc[j] / static_cast<double>(rows.size()));
    for (const auto& hit : index.search(q, k_s)) {
      if (known.contains(hit.id) || !seen.insert(hit.id).second) continue;
      out.ids.push_back(hit.id);
    }
  }
  out.vectors = index.reconstruct_batch(out.ids);
  return out;
}

namespace detail {

inline Selection representative(const Candidates& c, const std::vector<double>& u, std::size_t b,
                                std::uint64_t seed) {
  Selection sel;
  const auto top = top_by_score(u, c.ids, 3 * b);
  if (top.size() <= b) {
    for (auto i : top) {
      sel.ids.push_back(c.ids[i]);
      sel.scores.push_back(u[i]);
    }
    return sel;
  }
  Matrix pts(top.size(), c.vectors.cols());
  for (std::size_t i = 0; i < top.size(); ++i) {
    std::copy(c.vectors.row(top[i]).begin(), c.vectors.row(top[i]).end(), pts.row(i).begin());
  }
  const auto km = minibatch_kmeans(pts, {.k = b, .batch_size = 256, .iterations = 100, .seed = seed});
  std::vector<std::size_t> medoid(b, top.size());
  std::vector<double> best(b, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < top.size(); ++i) {
    const auto k = km.assignment[i];
    const double d = l2_sq(pts.row(i), km.centroids.row(k));
    if (d < best[k] || (d == best[k] && c.ids[top[i]] < c.ids[top[medoid[k]]])) {
      best[k] = d;
      medoid[k] = i;
    }
  }
  std::vector<char> used(top.size(), 0);
  for (auto m : medoid) {
    if (m == top.size()) continue;
    used[m] = 1;
  }
  // Clusters left empty are backfilled with the next most uncertain points.
  for (std::size_t i = 0; i < top.size() && std::count(used.begin(), used.end(), 1) < static_cast<long>(b); ++i) {
    used[i] = 1;
  }
  for (std::size_t i = 0; i < top.size(); ++i) {
    if (!used[i]) continue;
    sel.ids.push_back(c.ids[top[i]]);
    sel.scores.push_back(u[top[i]]);
  }
  return sel;
}

// Uncertainty-weighted k-means over the neighborhood, the most uncertain
// member of each cluster as its representative, then greedy max-min
// diversity over the representatives starting from the most uncertain.
inline Selection informative_cluster_diverse(const Candidates& c, const std::vector<double>& u, std::size_t b,
                                             std::uint64_t seed) {
  Selection sel;
  const std::size_t n = c.ids.size();
  if (n <= b) {
    for (auto i : top_by_score(u, c.ids, n)) {
      sel.ids.push_back(c.ids[i]);
      sel.scores.push_back(u[i]);
    }
    return sel;
  }
  const std::size_t k = std::min(2 * b, n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = u[i] + 1e-9;
  const auto km = kmeans(c.vectors, {.k = k, .iterations = 25, .seed = seed}, w);
  std::vector<std::size_t> rep(k, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rep[km.assignment[i]];
    if (r == n || u[i] > u[r] || (u[i] == u[r] && c.ids[i] < c.ids[r])) r = i;
  }
  std::vector<std::size_t> reps;
  for (auto r : rep) {
    if (r != n) reps.push_back(r);
  }
  std::vector<double> ru;
  std::vector<Id> rid;
  for (auto r : reps) {
    ru.push_back(u[r]);
    rid.push_back(c.ids[r]);
  }
  const std::size_t first = top_by_score(ru, rid, 1)[0];
  std::vector<double> mind(reps.size(), std::numeric_limits<double>::infinity());
  std::vector<char> taken(reps.size(), 0);
  std::size_t pick = first;
  while (true) {
    taken[pick] = 1;
    sel.ids.push_back(rid[pick]);
    sel.scores.push_back(ru[pick]);
    if (sel.ids.size() == std::min(b, reps.size())) break;
    const auto p = c.vectors.row(reps[pick]);
    std::size_t arg = reps.size();
    for (std::size_t i = 0; i < reps.size(); ++i) {
      if (taken[i]) continue;
      mind[i] = std::min(mind[i], l2_sq(c.vectors.row(reps[i]), p));
      if (arg == reps.size() || mind[i] > mind[arg] || (mind[i] == mind[arg] && rid[i] < rid[arg])) arg = i;
    }
    pick = arg;
  }
  return sel;
}

}  // namespace detail

/// One acquisition round. `model` is required by the uncertainty-based
/// strategies and ignored otherwise.
inline Selection select_batch(const AnnIndex& index, const LabeledPool& labeled, const ProbeModel* model,
                              const AlConfig& cfg) {
  cfg.validate();
  const std::size_t b = cfg.batch_size;
  switch (cfg.strategy) {
    case Strategy::KCenter:
    case Strategy::KCenterFull:
      return kcenter_select(index, labeled, cfg);
    case Strategy::Random: {
      std::mt19937_64 rng(cfg.seed);
      Selection sel;
      sel.ids = sample_unlabeled(index, detail::id_set(labeled.ids), b, rng);
      if (sel.ids.empty()) throw ValidationError("random: unlabeled pool is empty");
      sel.scores.assign(sel.ids.size(), 0.0);
      sel.partial = sel.ids.size() < b;
      return sel;
    }
    default:
      break;
  }
  if (!model) throw ValidationError(std::string(to_string(cfg.strategy)) + " needs a trained probe");

  std::size_t k_s = cfg.neighborhood_size;
  Candidates cand = localized_candidates(index, labeled, k_s, cfg.per_class_centroids);
  for (std::size_t retry = 0; retry < cfg.widen_retries && cand.ids.size() < b && k_s < index.size(); ++retry) {
    k_s = std::min(2 * k_s, index.size());
    cand = localized_candidates(index, labeled, k_s, cfg.per_class_centroids);
  }
  const auto kind = cfg.strategy == Strategy::Entropy ? UncertaintyKind::Entropy : UncertaintyKind::Margin;
  const auto u = score_uncertainty(*model, cand.vectors, kind);

  Selection sel;
  switch (cfg.strategy) {
    case Strategy::Representative:
      sel = detail::representative(cand, u, b, cfg.seed);
      break;
    case Strategy::InformativeClusterDiverse:
      sel = detail::informative_cluster_diverse(cand, u, b, cfg.seed);
      break;
    default:
      for (auto i : detail::top_by_score(u, cand.ids, b)) {
        sel.ids.push_back(cand.ids[i]);
        sel.scores.push_back(u[i]);
      }
  }
  sel.scored = cand.ids.size();
  sel.neighborhood = k_s;
  sel.partial = cand.ids.size() < b;
  return sel;
}

}  // namespace curatekit
