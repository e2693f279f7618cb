#pragma once

// Support-set clustering of multi-model proposals, consensus scoring, and the
// NMS variants applied to the fused candidates.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "curatekit/fusion/box.hpp"

namespace curatekit {

enum class NmsVariant { Standard, Soft, DIou, Weighted, Adaptive, Cluster };

inline std::string_view to_string(NmsVariant v) {
  switch (v) {
    case NmsVariant::Standard: return "standard";
    case NmsVariant::Soft: return "soft";
    case NmsVariant::DIou: return "diou";
    case NmsVariant::Weighted: return "weighted";
    case NmsVariant::Adaptive: return "adaptive";
    case NmsVariant::Cluster: return "cluster";
  }
  return "?";
}

inline NmsVariant parse_nms_variant(std::string_view s) {
  for (auto v : {NmsVariant::Standard, NmsVariant::Soft, NmsVariant::DIou, NmsVariant::Weighted,
                 NmsVariant::Adaptive, NmsVariant::Cluster}) {
    if (s == to_string(v)) return v;
  }
  if (s == "nms") return NmsVariant::Standard;
  throw ValidationError("unknown NMS variant '" + std::string(s) + "'");
}

struct NmsConfig {
  NmsVariant variant = NmsVariant::Standard;
  double tau_nms = 0.5;
  double sigma = 0.5;
  double score_floor = 0.001;
  double tau_iou = 0.5;
  std::vector<std::string> models;  // the ensemble; N = models.size()

  std::size_t ensemble_size() const noexcept { return models.size(); }

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(tau_nms) || !unit(tau_iou) || !unit(score_floor)) throw ValidationError("thresholds must lie in [0,1]");
    if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
    if (models.empty()) throw ValidationError("ensemble must name at least one model");
    if (std::set<std::string>(models.begin(), models.end()).size() != models.size()) {
      throw ValidationError("ensemble model ids must be distinct");
    }
  }
};

struct ConsensusCluster {
  std::string label;
  std::vector<Proposal> members;  // anchor first
  Box fused;
  double consensus = 0.0;

  double mean_confidence() const {
    double s = 0.0;
    for (const auto& m : members) s += m.score;
    return members.empty() ? 0.0 : s / static_cast<double>(members.size());
  }
};

/// One finalized detection.
struct FusedBox {
  Box box;
  std::string label;
  double score = 0.0;      // after NMS (equals consensus unless decayed)
  double consensus = 0.0;
  std::size_t members = 0;

  friend bool operator==(const FusedBox&, const FusedBox&) = default;
};

/// Anchor order: confidence desc, model id, area desc, coordinates.
inline bool proposal_before(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.model_id != b.model_id) return a.model_id < b.model_id;
  if (a.box.area() != b.box.area()) return a.box.area() > b.box.area();
  return a.box < b.box;
}

inline Box mean_box(const std::vector<Proposal>& ps) {
  Box b;
  for (const auto& p : ps) {
    b.xmin += p.box.xmin;
    b.ymin += p.box.ymin;
    b.xmax += p.box.xmax;
    b.ymax += p.box.ymax;
  }
  const double n = static_cast<double>(ps.size());
  return {b.xmin / n, b.ymin / n, b.xmax / n, b.ymax / n};
}

/// Greedy consumption clustering. Each unconsumed anchor takes, from every
/// other model, the unconsumed same-class proposal of highest IoU >= tau_iou.
inline std::vector<ConsensusCluster> build_clusters(std::vector<Proposal> proposals, const NmsConfig& cfg) {
  cfg.validate();
  const std::set<std::string> ensemble(cfg.models.begin(), cfg.models.end());
  for (const auto& p : proposals) {
    if (!ensemble.contains(p.model_id)) throw ValidationError("proposal from unknown model '" + p.model_id + "'");
    if (!p.box.valid()) throw ValidationError("invalid box for label '" + p.label + "'");
  }
  std::stable_sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    return a.label != b.label ? a.label < b.label : proposal_before(a, b);
  });
  const double n_models = static_cast<double>(cfg.ensemble_size());
  std::vector<char> used(proposals.size(), 0);
  std::vector<ConsensusCluster> out;
  for (std::size_t a = 0; a < proposals.size(); ++a) {
    if (used[a]) continue;
    used[a] = 1;
    ConsensusCluster c;
    c.label = proposals[a].label;
    c.members.push_back(proposals[a]);
    for (const auto& model : ensemble) {
      if (model == proposals[a].model_id) continue;
      std::size_t best = proposals.size();
      double best_iou = -1.0;
      for (std::size_t j = a + 1; j < proposals.size() && proposals[j].label == c.label; ++j) {
        if (used[j] || proposals[j].model_id != model) continue;
        const double v = iou(proposals[a].box, proposals[j].box);
        if (v >= cfg.tau_iou && v > best_iou) {
          best_iou = v;
          best = j;
        }
      }
      if (best < proposals.size()) {
        used[best] = 1;
        c.members.push_back(proposals[best]);
      }
    }
    c.fused = mean_box(c.members);
    c.consensus = static_cast<double>(c.members.size()) / n_models;
    out.push_back(std::move(c));
  }
  return out;
}

/// NMS rank: consensus desc, mean member confidence desc, area desc, coordinates.
inline void sort_for_nms(std::vector<ConsensusCluster>& cs) {
  std::vector<double> conf(cs.size());
  std::vector<std::size_t> order(cs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < cs.size(); ++i) conf[i] = cs[i].mean_confidence();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto &x = cs[a], &y = cs[b];
    if (x.consensus != y.consensus) return x.consensus > y.consensus;
    if (conf[a] != conf[b]) return conf[a] > conf[b];
    if (x.fused.area() != y.fused.area()) return x.fused.area() > y.fused.area();
    if (x.fused != y.fused) return x.fused < y.fused;
    return x.label < y.label;
  });
  std::vector<ConsensusCluster> sorted;
  sorted.reserve(cs.size());
  for (auto i : order) sorted.push_back(std::move(cs[i]));
  cs = std::move(sorted);
}

namespace detail {

inline FusedBox to_fused(const ConsensusCluster& c, double score) {
  return {c.fused, c.label, score, c.consensus, c.members.size()};
}

// Keep flags of greedy hard suppression in rank order.
template <typename Overlap>
std::vector<char> greedy_keep(const std::vector<ConsensusCluster>& cs, double tau, Overlap overlap) {
  std::vector<char> keep(cs.size(), 1);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    for (std::size_t j = 0; j < i && keep[i]; ++j) {
      if (keep[j] && cs[j].label == cs[i].label && overlap(cs[j].fused, cs[i].fused) > tau) keep[i] = 0;
    }
  }
  return keep;
}

}  // namespace detail

/// Final per-image detections, sorted by score descending (ties keep rank
/// order). Suppression only acts between candidates of the same label.
inline std::vector<FusedBox> apply_nms(std::vector<ConsensusCluster> cs, const NmsConfig& cfg) {
  sort_for_nms(cs);
  const std::size_t n = cs.size();
  std::vector<FusedBox> out;
  auto same = [&](std::size_t i, std::size_t j) { return cs[i].label == cs[j].label; };

  switch (cfg.variant) {
    case NmsVariant::Standard:
    case NmsVariant::DIou: {
      const auto keep = cfg.variant == NmsVariant::Standard
                            ? detail::greedy_keep(cs, cfg.tau_nms, [](const Box& a, const Box& b) { return iou(a, b); })
                            : detail::greedy_keep(cs, cfg.tau_nms, [](const Box& a, const Box& b) { return diou(a, b); });
      for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.push_back(detail::to_fused(cs[i], cs[i].consensus));
      }
      break;
    }
    case NmsVariant::Cluster: {
      // Matrix form: X[i][j] = IoU for ranked i < j of one label; iterate
      // keep_j = max_{i<j, keep_i} X[i][j] <= tau until it stops changing.
      std::vector<std::vector<double>> x(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) x[i][j] = same(i, j) ? iou(cs[i].fused, cs[j].fused) : 0.0;
      }
      std::vector<char> keep(n, 1);
      for (std::size_t round = 0; round <= n; ++round) {
        std::vector<char> next(n, 1);
        for (std::size_t j = 0; j < n; ++j) {
          double m = 0.0;
          for (std::size_t i = 0; i < j; ++i) {
            if (keep[i]) m = std::max(m, x[i][j]);
          }
          next[j] = m <= cfg.tau_nms;
        }
        if (next == keep) break;
        keep = std::move(next);
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.push_back(detail::to_fused(cs[i], cs[i].consensus));
      }
      break;
    }
    case NmsVariant::Soft: {
      std::vector<double> s(n);
      for (std::size_t i = 0; i < n; ++i) s[i] = cs[i].consensus;
      std::vector<char> done(n, 0);
      for (std::size_t step = 0; step < n; ++step) {
        std::size_t m = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (!done[i] && s[i] >= cfg.score_floor && (m == n || s[i] > s[m])) m = i;
        }
        if (m == n) break;
        done[m] = 1;
        out.push_back(detail::to_fused(cs[m], s[m]));
        for (std::size_t i = 0; i < n; ++i) {
          if (done[i] || !same(i, m)) continue;
          const double v = iou(cs[m].fused, cs[i].fused);
          s[i] *= std::exp(-(v * v) / cfg.sigma);
        }
      }
      break;
    }
    case NmsVariant::Weighted: {
      std::vector<char> gone(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (gone[i]) continue;
        double w = cs[i].consensus;
        Box acc{cs[i].fused.xmin * w, cs[i].fused.ymin * w, cs[i].fused.xmax * w, cs[i].fused.ymax * w};
        double total = w;
        for (std::size_t j = i + 1; j < n; ++j) {
          if (gone[j] || !same(i, j) || iou(cs[i].fused, cs[j].fused) <= cfg.tau_nms) continue;
          gone[j] = 1;
          w = cs[j].consensus;
          acc.xmin += w * cs[j].fused.xmin;
          acc.ymin += w * cs[j].fused.ymin;
          acc.xmax += w * cs[j].fused.xmax;
          acc.ymax += w * cs[j].fused.ymax;
          total += w;
        }
        auto f = detail::to_fused(cs[i], cs[i].consensus);
        f.box = {acc.xmin / total, acc.ymin / total, acc.xmax / total, acc.ymax / total};
        out.push_back(std::move(f));
      }
      break;
    }
    case NmsVariant::Adaptive: {
      // A kept box M suppresses b only when IoU(M,b) exceeds both tau and
      // M's density among the remaining same-label candidates (b excluded).
      std::vector<std::vector<double>> x(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) x[i][j] = x[j][i] = same(i, j) ? iou(cs[i].fused, cs[j].fused) : 0.0;
      }
      std::vector<char> keep(n, 1);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t m = 0; m < b && keep[b]; ++m) {
          if (!keep[m] || !same(m, b)) continue;
          double density = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            if (j != m && j != b) density = std::max(density, x[m][j]);
          }
          if (x[m][b] > std::max(cfg.tau_nms, density)) keep[b] = 0;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.push_back(detail::to_fused(cs[i], cs[i].consensus));
      }
      break;
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const FusedBox& a, const FusedBox& b) { return a.score > b.score; });
  return out;
}

}  // namespace curatekit
