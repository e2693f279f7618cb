#pragma once

// Scaling and sample-efficiency experiments over synthetic pools.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <new>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "curatekit/al/probe.hpp"
#include "curatekit/al/select.hpp"
#include "curatekit/ann/index.hpp"
#include "curatekit/bench/memory.hpp"
#include "curatekit/bench/synthetic.hpp"
#include "curatekit/fusion/voc.hpp"

namespace curatekit {

struct IndexProgression {
  std::size_t ivf_flat_from = 100000;
  std::size_t ivf_pq_from = 1000000;

  IndexKind for_scale(std::size_t n) const noexcept {
    if (n >= ivf_pq_from) return IndexKind::IvfPq;
    if (n >= ivf_flat_from) return IndexKind::IvfFlat;
    return IndexKind::Flat;
  }
};

struct BenchConfig {
  std::vector<std::size_t> scales = {10000, 100000};
  std::vector<std::size_t> dims = {128};
  IndexProgression progression;
  IndexConfig index;  // kind is chosen per scale by the progression
  std::vector<Strategy> strategies = {Strategy::KCenter, Strategy::Random};
  std::size_t label_budget = 1000;
  std::size_t round_size = 100;
  std::size_t candidate_pool_size = 10000;
  std::size_t neighborhood_size = 1000;
  std::size_t labeled_size = 1000;  // |L| for scaling measurements
  std::size_t repeats = 3;
  std::vector<std::uint64_t> seeds = {1, 2};
  TaskConfig task;

  void validate() const {
    if (scales.empty()) throw ValidationError("bench: scales must not be empty");
    for (std::size_t i = 1; i < scales.size(); ++i) {
      if (scales[i] <= scales[i - 1]) throw ValidationError("bench: scales must be strictly ascending");
    }
    if (dims.empty()) throw ValidationError("bench: dims must not be empty");
    for (auto d : dims) {
      if (d == 0) throw ValidationError("bench: dims must be positive");
    }
    if (strategies.empty()) throw ValidationError("bench: strategies must not be empty");
    if (seeds.size() < 2) throw ValidationError("bench: at least two seeds are required");
    if (round_size == 0) throw ValidationError("bench: round_size must be >= 1");
    if (repeats == 0) throw ValidationError("bench: repeats must be >= 1");
    if (labeled_size < 2) throw ValidationError("bench: labeled_size must be >= 2");
    if (progression.ivf_pq_from < progression.ivf_flat_from) {
      throw ValidationError("bench: ivf_pq_from must not precede ivf_flat_from");
    }
    task.validate();
  }
};

namespace detail {

template <typename T>
T take(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + ": expected a JSON object");
  const std::set<std::string> ok(known.begin(), known.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.contains(k)) throw ValidationError(std::string(where) + ": unknown key '" + k + "'");
  }
}

}  // namespace detail

inline BenchConfig bench_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"scales", "dims", "progression", "index", "strategies", "label_budget", "round_size",
                          "candidate_pool_size", "neighborhood_size", "labeled_size", "repeats", "seeds", "task"},
                         "bench config");
  BenchConfig c;
  c.scales = detail::take(j, "scales", c.scales);
  c.dims = detail::take(j, "dims", c.dims);
  c.label_budget = detail::take(j, "label_budget", c.label_budget);
  c.round_size = detail::take(j, "round_size", c.round_size);
  c.candidate_pool_size = detail::take(j, "candidate_pool_size", c.candidate_pool_size);
  c.neighborhood_size = detail::take(j, "neighborhood_size", c.neighborhood_size);
  c.labeled_size = detail::take(j, "labeled_size", c.labeled_size);
  c.repeats = detail::take(j, "repeats", c.repeats);
  c.seeds = detail::take(j, "seeds", c.seeds);
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : detail::take(j, "strategies", std::vector<std::string>{})) {
      c.strategies.push_back(parse_strategy(s));
    }
  }
  if (j.contains("progression")) {
    const auto& p = j.at("progression");
    detail::reject_unknown(p, {"ivf_flat_from", "ivf_pq_from"}, "bench config progression");
    c.progression.ivf_flat_from = detail::take(p, "ivf_flat_from", c.progression.ivf_flat_from);
    c.progression.ivf_pq_from = detail::take(p, "ivf_pq_from", c.progression.ivf_pq_from);
  }
  if (j.contains("index")) {
    const auto& x = j.at("index");
    detail::reject_unknown(x, {"nlist", "nprobe", "pq_m", "pq_bits", "kmeans_iterations", "train_size"},
                           "bench config index");
    c.index.nlist = detail::take(x, "nlist", c.index.nlist);
    c.index.nprobe = detail::take(x, "nprobe", c.index.nprobe);
    c.index.pq_m = detail::take(x, "pq_m", c.index.pq_m);
    c.index.pq_bits = detail::take(x, "pq_bits", c.index.pq_bits);
    c.index.kmeans_iterations = detail::take(x, "kmeans_iterations", c.index.kmeans_iterations);
    c.index.train_size = detail::take(x, "train_size", c.index.train_size);
  }
  if (j.contains("task")) {
    const auto& t = j.at("task");
    detail::reject_unknown(t, {"clusters_per_class", "separation", "cluster_spread", "label_noise", "holdout"},
                           "bench config task");
    c.task.clusters_per_class = detail::take(t, "clusters_per_class", c.task.clusters_per_class);
    c.task.separation = detail::take(t, "separation", c.task.separation);
    c.task.cluster_spread = detail::take(t, "cluster_spread", c.task.cluster_spread);
    c.task.label_noise = detail::take(t, "label_noise", c.task.label_noise);
    c.task.holdout = detail::take(t, "holdout", c.task.holdout);
  }
  c.validate();
  return c;
}

inline BenchConfig load_bench_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open bench config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return bench_config_from_json(j);
}

struct CurvePoint {
  std::string strategy;
  std::size_t scale = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::size_t labels_used = 0;  // acquisitions beyond the random seed set
  double auc = 0.0;
  double wall_clock_s = 0.0;  // selection time of this round
  std::uint64_t peak_mem_bytes = 0;
  bool flagged = false;
  std::string note;
};

struct ScalingRow {
  std::string strategy;
  std::size_t scale = 0;
  std::size_t dim = 0;
  std::string index_kind;
  double wall_clock_s = 0.0;  // median over repeats
  std::uint64_t peak_mem_bytes = 0;
  std::uint64_t seed = 0;
  bool flagged = false;
  std::string note;
};

/// Random ids drawn until both classes are present, at least `size` of them.
inline LabeledPool seed_labels(const SyntheticTask& task, std::size_t size, std::uint64_t seed) {
  const std::size_t n = task.labels.size();
  if (size > n) throw ValidationError("seed set larger than the pool");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  LabeledPool l;
  bool seen[2] = {false, false};
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
    const auto r = order[i];
    l.add(static_cast<Id>(r), task.labels[r]);
    seen[task.labels[r]] = true;
    if (l.size() >= size && seen[0] && seen[1]) return l;
  }
  throw ValidationError("pool labels contain a single class");
}

/// Seed-set size: max(10, ceil(1% of the acquisition budget)).
inline std::size_t seed_set_size(std::size_t budget) {
  return std::max<std::size_t>(10, (budget + 99) / 100);
}

inline double probe_auc(const ProbeModel& model, const SyntheticTask& task) {
  const RowMatrixD p = model.predict_proba(task.eval_vectors);
  const auto col = std::find(model.classes.begin(), model.classes.end(), 1) - model.classes.begin();
  if (col == static_cast<std::ptrdiff_t>(model.classes.size())) throw ValidationError("probe never saw class 1");
  std::vector<double> s(task.eval_labels.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = p(static_cast<Eigen::Index>(i), col);
  return roc_auc(s, task.eval_labels);
}

inline ProbeModel fit_probe(const AnnIndex& index, const LabeledPool& labeled, std::uint64_t seed) {
  ProbeOptions opt;
  opt.seed = seed;
  return train_probe(labeled, index.reconstruct_batch(labeled.ids), opt);
}

/// The index kind follows the nominal scale N (pool plus held-out split).
inline AnnIndex build_bench_index(const BenchConfig& cfg, std::size_t scale, VectorPool pool) {
  IndexConfig ic = cfg.index;
  ic.kind = cfg.progression.for_scale(scale);
  return AnnIndex::build(std::move(pool), ic);
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct Timed {
  Selection sel;
  double seconds = 0.0;
  std::uint64_t peak = 0;
};

inline Timed timed_select(const AnnIndex& index, const LabeledPool& labeled, const ProbeModel* model,
                          const AlConfig& al) {
  Timed t;
  memtrack::PeakScope scope;
  const auto t0 = std::chrono::steady_clock::now();
  t.sel = select_batch(index, labeled, model, al);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  t.peak = scope.peak_bytes();
  return t;
}

}  // namespace detail

/// One learning curve: random seed set, then select -> reveal -> retrain
/// rounds until the budget is spent.
inline std::vector<CurvePoint> run_al_curve(const BenchConfig& cfg, const SyntheticTask& task, const AnnIndex& index,
                                            Strategy strategy, std::uint64_t seed) {
  std::vector<CurvePoint> out;
  CurvePoint base;
  base.strategy = std::string(to_string(strategy));
  base.scale = task.labels.size() + task.eval_labels.size();
  base.dim = index.dim();
  base.seed = seed;

  LabeledPool labeled = seed_labels(task, seed_set_size(cfg.label_budget), seed);
  ProbeModel model = fit_probe(index, labeled, seed);
  CurvePoint p = base;
  p.auc = probe_auc(model, task);
  out.push_back(p);

  std::size_t acquired = 0;
  for (std::size_t round = 1; acquired < cfg.label_budget; ++round) {
    AlConfig al;
    al.strategy = strategy;
    al.batch_size = std::min(cfg.round_size, cfg.label_budget - acquired);
    al.candidate_pool_size = cfg.candidate_pool_size;
    al.neighborhood_size = cfg.neighborhood_size;
    al.seed = detail::mix_seed(seed, round);
    const auto t = detail::timed_select(index, labeled, &model, al);
    if (t.sel.ids.empty()) throw Error("selection returned no candidates in round " + std::to_string(round));
    for (auto id : t.sel.ids) labeled.add(id, task.labels[static_cast<std::size_t>(id)]);
    acquired += t.sel.ids.size();
    model = fit_probe(index, labeled, detail::mix_seed(seed, round));
    p = base;
    p.round = round;
    p.labels_used = acquired;
    p.auc = probe_auc(model, task);
    p.wall_clock_s = t.seconds;
    p.peak_mem_bytes = t.peak;
    out.push_back(p);
  }
  return out;
}

/// Learning curves for every (scale, dim, seed, strategy). Strategies share
/// the pool, index and seed set of a seed; `task.pool` is moved into the index. A failing run becomes a flagged
/// point and the sweep continues.
inline std::vector<CurvePoint> run_al_loop(const BenchConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  std::vector<CurvePoint> out;
  for (auto scale : cfg.scales) {
    for (auto dim : cfg.dims) {
      for (auto seed : cfg.seeds) {
        std::optional<SyntheticTask> task;
        std::optional<AnnIndex> index;
        std::string setup_error;
        try {
          task = gen_synthetic(scale, dim, cfg.task, seed);
          index = build_bench_index(cfg, scale, std::move(task->pool));
        } catch (const std::exception& e) {
          setup_error = e.what();
        }
        for (auto strategy : cfg.strategies) {
          if (log) *log << "curve " << to_string(strategy) << " N=" << scale << " d=" << dim << " seed=" << seed << '\n';
          try {
            if (!setup_error.empty()) throw Error(setup_error);
            auto curve = run_al_curve(cfg, *task, *index, strategy, seed);
            out.insert(out.end(), curve.begin(), curve.end());
          } catch (const std::exception& e) {
            CurvePoint f;
            f.strategy = std::string(to_string(strategy));
            f.scale = scale;
            f.dim = dim;
            f.seed = seed;
            f.flagged = true;
            f.auc = std::nan("");
            f.note = e.what();
            out.push_back(f);
          }
        }
      }
    }
  }
  return out;
}

/// Median-of-repeats selection time and peak heap growth for one batch per
/// (strategy, scale, dim), using the first seed. Failures, including running
/// out of memory, become flagged rows.
inline std::vector<ScalingRow> run_scaling_bench(const BenchConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const std::uint64_t seed = cfg.seeds.front();
  std::vector<ScalingRow> out;
  for (auto scale : cfg.scales) {
    for (auto dim : cfg.dims) {
      std::optional<SyntheticTask> task;
      std::optional<AnnIndex> index;
      std::optional<ProbeModel> model;
      LabeledPool labeled;
      std::string setup_error;
      try {
        task = gen_synthetic(scale, dim, cfg.task, seed);
        labeled = seed_labels(*task, cfg.labeled_size, seed);
        index = build_bench_index(cfg, scale, std::move(task->pool));
        model = fit_probe(*index, labeled, seed);
      } catch (const std::bad_alloc&) {
        setup_error = "out of memory";
      } catch (const std::exception& e) {
        setup_error = e.what();
      }
      for (auto strategy : cfg.strategies) {
        ScalingRow row;
        row.strategy = std::string(to_string(strategy));
        row.scale = scale;
        row.dim = dim;
        row.index_kind = std::string(to_string(cfg.progression.for_scale(scale)));
        row.seed = seed;
        if (log) *log << "scaling " << row.strategy << " N=" << scale << " d=" << dim << '\n';
        try {
          if (!setup_error.empty()) throw Error(setup_error);
          AlConfig al;
          al.strategy = strategy;
          al.batch_size = cfg.round_size;
          al.candidate_pool_size = cfg.candidate_pool_size;
          al.neighborhood_size = cfg.neighborhood_size;
          al.seed = detail::mix_seed(seed, 1);
          std::vector<double> times;
          for (std::size_t r = 0; r < cfg.repeats; ++r) {
            const auto t = detail::timed_select(*index, labeled, &*model, al);
            times.push_back(t.seconds);
            row.peak_mem_bytes = std::max(row.peak_mem_bytes, t.peak);
          }
          std::sort(times.begin(), times.end());
          const std::size_t m = times.size();
          row.wall_clock_s = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
        } catch (const std::bad_alloc&) {
          row.flagged = true;
          row.note = "out of memory";
        } catch (const std::exception& e) {
          row.flagged = true;
          row.note = e.what();
        }
        out.push_back(row);
      }
    }
  }
  return out;
}

inline constexpr const char* kScalingHeader = "strategy,scale,dim,index_kind,wall_clock_s,peak_mem_bytes,seed";
inline constexpr const char* kCurvesHeader =
    "strategy,scale,dim,seed,round,labels_used,auc,wall_clock_s,peak_mem_bytes,flagged";

/// Flagged rows keep the schema and carry "nan" in the measurement columns.
inline void write_scaling_csv(const std::filesystem::path& path, const std::vector<ScalingRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kScalingHeader << '\n';
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.scale << ',' << r.dim << ',' << r.index_kind << ','
        << (r.flagged ? "nan" : detail::format_number(r.wall_clock_s)) << ','
        << (r.flagged ? "nan" : std::to_string(r.peak_mem_bytes)) << ',' << r.seed << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& points) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kCurvesHeader << '\n';
  for (const auto& p : points) {
    out << p.strategy << ',' << p.scale << ',' << p.dim << ',' << p.seed << ',' << p.round << ',' << p.labels_used
        << ',' << (p.flagged ? "nan" : detail::format_number(p.auc)) << ','
        << detail::format_number(p.wall_clock_s) << ',' << p.peak_mem_bytes << ',' << (p.flagged ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace curatekit
