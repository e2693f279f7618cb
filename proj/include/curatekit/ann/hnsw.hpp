#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <utility>
#include <vector>

#include "curatekit/core.hpp"

namespace curatekit {

/// Layered proximity graph over the rows of a matrix it does not own.
/// Nodes are row positions.
class HnswGraph {
 public:
  struct Params {
    std::size_t m = 32;
    std::size_t ef_construction = 200;
    std::uint64_t seed = 1234;
  };

  HnswGraph() = default;

  void build(const Matrix& data, const Params& p) {
    params_ = p;
    if (p.m < 2) throw ValidationError("hnsw_m must be >= 2");
    const std::size_t n = data.rows();
    links_.assign(n, {});
    levels_.assign(n, 0);
    entry_ = 0;
    max_level_ = 0;
    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> unif(std::nextafter(0.0, 1.0), 1.0);
    const double mult = 1.0 / std::log(static_cast<double>(p.m));
    for (std::size_t i = 0; i < n; ++i) {
      const auto level = static_cast<std::uint32_t>(std::floor(-std::log(unif(rng)) * mult));
      insert(data, static_cast<std::uint32_t>(i), level);
    }
    repair_connectivity(data);
  }

  std::size_t size() const noexcept { return links_.size(); }
  std::uint32_t max_level() const noexcept { return max_level_; }
  std::uint32_t entry_point() const noexcept { return entry_; }
  const std::vector<std::uint32_t>& neighbors(std::uint32_t node, std::uint32_t level) const {
    return links_[node][level];
  }
  std::uint32_t level_of(std::uint32_t node) const noexcept { return levels_[node]; }
  const Params& params() const noexcept { return params_; }

  /// Nodes reachable from the entry point on layer 0.
  std::size_t reachable_at_layer0() const {
    if (links_.empty()) return 0;
    std::vector<char> seen(size(), 0);
    std::vector<std::uint32_t> stack{entry_};
    seen[entry_] = 1;
    std::size_t count = 0;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      ++count;
      for (auto v : links_[u][0]) {
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    return count;
  }

  /// Returns (squared distance, node) pairs, nearest first, at most k.
  std::vector<std::pair<double, std::uint32_t>> search(const Matrix& data, std::span<const float> q,
                                                       std::size_t k, std::size_t ef) const {
    if (links_.empty()) return {};
    std::uint32_t cur = entry_;
    double cur_d = l2_sq(q, data.row(cur));
    for (std::uint32_t level = max_level_; level > 0; --level) {
      greedy_step(data, q, level, cur, cur_d);
    }
    auto found = search_layer(data, q, {{cur_d, cur}}, std::max(ef, k), 0);
    if (found.size() > k) found.resize(k);
    return found;
  }

  // Serialization access.
  std::vector<std::vector<std::vector<std::uint32_t>>>& raw_links() noexcept { return links_; }
  std::vector<std::uint32_t>& raw_levels() noexcept { return levels_; }
  void set_entry(std::uint32_t entry, std::uint32_t max_level) noexcept {
    entry_ = entry;
    max_level_ = max_level;
  }
  void set_params(const Params& p) noexcept { params_ = p; }
  const std::vector<std::vector<std::vector<std::uint32_t>>>& raw_links() const noexcept { return links_; }

  std::size_t memory_bytes() const noexcept {
    std::size_t bytes = levels_.size() * sizeof(std::uint32_t);
    for (const auto& node : links_) {
      for (const auto& l : node) bytes += l.size() * sizeof(std::uint32_t);
    }
    return bytes;
  }

 private:
  using Cand = std::pair<double, std::uint32_t>;

  std::size_t capacity(std::uint32_t level) const noexcept {
    return level == 0 ? 2 * params_.m : params_.m;
  }

  void greedy_step(const Matrix& data, std::span<const float> q, std::uint32_t level, std::uint32_t& cur,
                   double& cur_d) const {
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto v : links_[cur][level]) {
        const double d = l2_sq(q, data.row(v));
        if (d < cur_d || (d == cur_d && v < cur)) {
          cur_d = d;
          cur = v;
          changed = true;
        }
      }
    }
  }

  // Beam search on one layer; result sorted by (distance, node).
  std::vector<Cand> search_layer(const Matrix& data, std::span<const float> q, std::vector<Cand> entries,
                                 std::size_t ef, std::uint32_t level) const {
    std::vector<char> visited(size(), 0);
    std::priority_queue<Cand, std::vector<Cand>, std::greater<>> frontier;
    std::priority_queue<Cand> best;
    for (const auto& e : entries) {
      if (visited[e.second]) continue;
      visited[e.second] = 1;
      frontier.push(e);
      best.push(e);
    }
    while (best.size() > ef) best.pop();
    while (!frontier.empty()) {
      const auto [d, u] = frontier.top();
      if (best.size() >= ef && d > best.top().first) break;
      frontier.pop();
      for (auto v : links_[u][level]) {
        if (visited[v]) continue;
        visited[v] = 1;
        const double dv = l2_sq(q, data.row(v));
        if (best.size() < ef || Cand{dv, v} < best.top()) {
          frontier.push({dv, v});
          best.push({dv, v});
          if (best.size() > ef) best.pop();
        }
      }
    }
    std::vector<Cand> out;
    out.reserve(best.size());
    while (!best.empty()) {
      out.push_back(best.top());
      best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  // Diversity heuristic: keep a candidate only if it is closer to the base
  // than to every neighbor already kept.
  std::vector<std::uint32_t> select_neighbors(const Matrix& data, const std::vector<Cand>& sorted,
                                              std::size_t limit) const {
    std::vector<std::uint32_t> kept;
    for (const auto& [d, v] : sorted) {
      if (kept.size() >= limit) break;
      bool ok = true;
      for (auto w : kept) {
        if (l2_sq(data.row(v), data.row(w)) < d) {
          ok = false;
          break;
        }
      }
      if (ok) kept.push_back(v);
    }
    return kept;
  }

  void shrink(const Matrix& data, std::uint32_t node, std::uint32_t level) {
    auto& nl = links_[node][level];
    if (nl.size() <= capacity(level)) return;
    std::vector<Cand> c;
    c.reserve(nl.size());
    for (auto v : nl) c.emplace_back(l2_sq(data.row(node), data.row(v)), v);
    std::sort(c.begin(), c.end());
    nl = select_neighbors(data, c, capacity(level));
  }

  void insert(const Matrix& data, std::uint32_t node, std::uint32_t level) {
    levels_[node] = level;
    links_[node].assign(level + 1, {});
    if (node == 0) {
      entry_ = 0;
      max_level_ = level;
      return;
    }
    const auto q = data.row(node);
    std::uint32_t cur = entry_;
    double cur_d = l2_sq(q, data.row(cur));
    for (std::uint32_t l = max_level_; l > level; --l) greedy_step(data, q, l, cur, cur_d);
    std::vector<Cand> entries{{cur_d, cur}};
    for (std::int64_t l = std::min(level, max_level_); l >= 0; --l) {
      const auto lv = static_cast<std::uint32_t>(l);
      auto found = search_layer(data, q, entries, params_.ef_construction, lv);
      auto chosen = select_neighbors(data, found, params_.m);
      links_[node][lv] = chosen;
      for (auto v : chosen) {
        links_[v][lv].push_back(node);
        shrink(data, v, lv);
      }
      entries = std::move(found);
    }
    if (level > max_level_) {
      max_level_ = level;
      entry_ = node;
    }
  }

  // Links any node unreachable on layer 0 to its nearest reachable node.
  void repair_connectivity(const Matrix& data) {
    if (links_.empty()) return;
    std::vector<char> seen(size(), 0);
    auto flood = [&](std::uint32_t start) {
      std::vector<std::uint32_t> stack{start};
      seen[start] = 1;
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (auto v : links_[u][0]) {
          if (!seen[v]) {
            seen[v] = 1;
            stack.push_back(v);
          }
        }
      }
    };
    flood(entry_);
    for (std::uint32_t u = 0; u < size(); ++u) {
      if (seen[u]) continue;
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = entry_;
      for (std::uint32_t v = 0; v < size(); ++v) {
        if (!seen[v]) continue;
        const double d = l2_sq(data.row(u), data.row(v));
        if (d < best) {
          best = d;
          arg = v;
        }
      }
      links_[arg][0].push_back(u);
      links_[u][0].push_back(arg);
      flood(u);
    }
  }

  Params params_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // node -> level -> neighbors
  std::vector<std::uint32_t> levels_;
  std::uint32_t entry_ = 0;
  std::uint32_t max_level_ = 0;
};

}  // namespace curatekit
