#pragma once

// Declarative stage composition: index -> select -> ood -> fuse -> eval ->
// bench, with a checksummed manifest per run.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "curatekit/al/probe.hpp"
#include "curatekit/al/select.hpp"
#include "curatekit/ann/index.hpp"
#include "curatekit/bench/harness.hpp"
#include "curatekit/eval/metrics.hpp"
#include "curatekit/fusion/fuse.hpp"
#include "curatekit/ood/gmm.hpp"
#include "curatekit/store.hpp"

namespace curatekit {

/// A stage failed while running. Carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

enum class StageKind { Index, Select, Ood, Fuse, Eval, Bench };

inline std::string_view to_string(StageKind k) {
  switch (k) {
    case StageKind::Index: return "index";
    case StageKind::Select: return "select";
    case StageKind::Ood: return "ood";
    case StageKind::Fuse: return "fuse";
    case StageKind::Eval: return "eval";
    case StageKind::Bench: return "bench";
  }
  return "?";
}

inline StageKind parse_stage_kind(std::string_view s) {
  for (auto k : {StageKind::Index, StageKind::Select, StageKind::Ood, StageKind::Fuse, StageKind::Eval,
                 StageKind::Bench}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown stage '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Stage configuration blocks.

inline IndexConfig index_config_from_json(const nlohmann::json& j, std::uint64_t seed) {
  detail::reject_unknown(j,
                         {"kind", "nlist", "nprobe", "pq_m", "pq_bits", "hnsw_m", "ef_construction", "ef_search",
                          "kmeans_iterations", "train_size", "seed"},
                         "index config");
  IndexConfig c;
  c.kind = parse_index_kind(detail::take(j, "kind", std::string("flat")));
  c.nlist = detail::take(j, "nlist", c.nlist);
  c.nprobe = detail::take(j, "nprobe", c.nprobe);
  c.pq_m = detail::take(j, "pq_m", c.pq_m);
  c.pq_bits = detail::take(j, "pq_bits", c.pq_bits);
  c.hnsw_m = detail::take(j, "hnsw_m", c.hnsw_m);
  c.ef_construction = detail::take(j, "ef_construction", c.ef_construction);
  c.ef_search = detail::take(j, "ef_search", c.ef_search);
  c.kmeans_iterations = detail::take(j, "kmeans_iterations", c.kmeans_iterations);
  c.train_size = detail::take(j, "train_size", c.train_size);
  c.seed = detail::take(j, "seed", seed);
  return c;
}

inline AlConfig al_config_from_json(const nlohmann::json& j, std::uint64_t seed) {
  detail::reject_unknown(j,
                         {"strategy", "batch_size", "candidate_pool_size", "neighborhood_size", "per_class_centroids",
                          "widen_retries", "seed"},
                         "select config");
  AlConfig c;
  c.strategy = parse_strategy(detail::take(j, "strategy", std::string("kcenter")));
  c.batch_size = detail::take(j, "batch_size", c.batch_size);
  c.candidate_pool_size = detail::take(j, "candidate_pool_size", c.candidate_pool_size);
  c.neighborhood_size = detail::take(j, "neighborhood_size", c.neighborhood_size);
  c.per_class_centroids = detail::take(j, "per_class_centroids", c.per_class_centroids);
  c.widen_retries = detail::take(j, "widen_retries", c.widen_retries);
  c.seed = detail::take(j, "seed", seed);
  c.validate();
  return c;
}

struct OodStageConfig {
  GmmOptions gmm;
  std::optional<double> tau;  // empty: auto quantile on the reference set
  double quantile = 0.05;
};

inline OodStageConfig ood_config_from_json(const nlohmann::json& j, std::uint64_t seed) {
  detail::reject_unknown(j, {"k", "covariance", "reg_eps", "max_iterations", "tolerance", "tau", "quantile", "seed"},
                         "ood config");
  OodStageConfig c;
  c.gmm.k = detail::take(j, "k", c.gmm.k);
  c.gmm.covariance = parse_covariance(detail::take(j, "covariance", std::string("diagonal")));
  c.gmm.reg_eps = detail::take(j, "reg_eps", c.gmm.reg_eps);
  c.gmm.max_iterations = detail::take(j, "max_iterations", c.gmm.max_iterations);
  c.gmm.tolerance = detail::take(j, "tolerance", c.gmm.tolerance);
  c.gmm.seed = detail::take(j, "seed", seed);
  c.quantile = detail::take(j, "quantile", c.quantile);
  if (j.contains("tau") && !(j.at("tau").is_string() && j.at("tau").get<std::string>() == "auto")) {
    c.tau = detail::take(j, "tau", 0.0);
    if (!(*c.tau >= 0.0 && *c.tau <= 1.0)) throw ValidationError("ood config: tau must be in [0, 1] or \"auto\"");
  }
  if (!(c.quantile >= 0.0 && c.quantile <= 1.0)) throw ValidationError("ood config: quantile must be in [0, 1]");
  if (c.gmm.k == 0) throw ValidationError("ood config: k must be >= 1");
  return c;
}

struct FuseStageConfig {
  NmsConfig nms;
  std::size_t threads = 0;
};

inline FuseStageConfig fuse_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"variant", "tau_nms", "sigma", "score_floor", "tau_iou", "threads"}, "fuse config");
  FuseStageConfig c;
  c.nms.variant = parse_nms_variant(detail::take(j, "variant", std::string("standard")));
  c.nms.tau_nms = detail::take(j, "tau_nms", c.nms.tau_nms);
  c.nms.sigma = detail::take(j, "sigma", c.nms.sigma);
  c.nms.score_floor = detail::take(j, "score_floor", c.nms.score_floor);
  c.nms.tau_iou = detail::take(j, "tau_iou", c.nms.tau_iou);
  c.threads = detail::take(j, "threads", c.threads);
  auto check = c.nms;
  check.models = {"m"};
  check.validate();
  return c;
}

struct EvalStageConfig {
  EvalConfig eval;
  std::string method;
};

inline EvalStageConfig eval_config_from_json(const nlohmann::json& j, const std::string& fallback_method) {
  detail::reject_unknown(j, {"vocabulary", "method", "iou_thresh"}, "eval config");
  EvalStageConfig c;
  c.eval.vocabulary = detail::take(j, "vocabulary", c.eval.vocabulary);
  c.eval.iou_thresh = detail::take(j, "iou_thresh", c.eval.iou_thresh);
  c.method = detail::take(j, "method", fallback_method);
  return c;
}

struct BenchStageConfig {
  BenchConfig bench;
  bool curves = false;
};

inline BenchStageConfig bench_stage_config_from_json(nlohmann::json j) {
  BenchStageConfig c;
  if (!j.is_object()) throw ValidationError("bench config: expected a JSON object");
  const auto mode = detail::take(j, "mode", std::string("scaling"));
  if (mode != "scaling" && mode != "curves") throw ValidationError("bench config: mode must be scaling or curves");
  c.curves = mode == "curves";
  j.erase("mode");
  c.bench = bench_config_from_json(j);
  return c;
}

// ---------------------------------------------------------------------------
// Spec.

struct StageSpec {
  StageKind kind = StageKind::Index;
  std::string name;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json config = nlohmann::json::object();
};

struct PipelineSpec {
  std::uint64_t seed = 0;
  std::filesystem::path artifacts;  // absolute after loading
  std::filesystem::path base_dir;   // relative inputs resolve against this
  std::vector<StageSpec> stages;
};

namespace detail {

inline const std::map<StageKind, std::vector<std::string>>& required_inputs() {
  static const std::map<StageKind, std::vector<std::string>> m = {
      {StageKind::Index, {"pool"}},           {StageKind::Select, {"index", "labels"}},
      {StageKind::Ood, {"reference", "pool"}}, {StageKind::Fuse, {"models"}},
      {StageKind::Eval, {"pred", "gt"}},      {StageKind::Bench, {}}};
  return m;
}

inline const std::map<StageKind, std::vector<std::string>>& optional_inputs() {
  static const std::map<StageKind, std::vector<std::string>> m = {
      {StageKind::Index, {}}, {StageKind::Select, {}}, {StageKind::Ood, {"ids"}},
      {StageKind::Fuse, {}},  {StageKind::Eval, {}},   {StageKind::Bench, {}}};
  return m;
}

// Primary output of a stage, relative to its output directory; "" is the
// directory itself.
inline std::string primary_output(StageKind k) {
  switch (k) {
    case StageKind::Index: return "index.bin";
    case StageKind::Select: return "batch.csv";
    case StageKind::Ood: return "filter.csv";
    case StageKind::Fuse: return "";
    case StageKind::Eval: return "report.csv";
    case StageKind::Bench: return "bench.csv";
  }
  return "";
}

}  // namespace detail

inline PipelineSpec pipeline_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  detail::reject_unknown(j, {"seed", "artifacts", "stages"}, "pipeline spec");
  PipelineSpec s;
  s.base_dir = std::filesystem::absolute(base_dir).lexically_normal();
  s.seed = detail::take(j, "seed", std::uint64_t{0});
  const auto art = detail::take(j, "artifacts", std::string("artifacts"));
  s.artifacts = (s.base_dir / art).lexically_normal();
  if (j.contains("stages") && !j.at("stages").is_array()) throw ValidationError("pipeline spec: stages must be a list");
  for (const auto& st : j.value("stages", nlohmann::json::array())) {
    detail::reject_unknown(st, {"stage", "name", "inputs", "config"}, "pipeline stage");
    StageSpec spec;
    if (!st.contains("stage")) throw ValidationError("pipeline stage: missing 'stage'");
    spec.kind = parse_stage_kind(detail::take(st, "stage", std::string()));
    spec.name = detail::take(st, "name", std::string(to_string(spec.kind)));
    spec.inputs = st.value("inputs", nlohmann::json::object());
    spec.config = st.value("config", nlohmann::json::object());
    if (!spec.inputs.is_object()) throw ValidationError("stage '" + spec.name + "': inputs must be an object");
    s.stages.push_back(std::move(spec));
  }
  return s;
}

inline PipelineSpec load_pipeline_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pipeline spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return pipeline_spec_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

// ---------------------------------------------------------------------------
// Manifest.

struct FileDigest {
  std::string path;  // relative to the spec directory
  std::string crc64;
  std::uint64_t bytes = 0;
  friend bool operator==(const FileDigest&, const FileDigest&) = default;
};

struct ManifestEntry {
  std::string stage;
  std::string name;
  std::vector<FileDigest> inputs;
  std::string config_hash;
  std::vector<FileDigest> outputs;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct RunManifest {
  std::string created;  // timing metadata; excluded from comparisons
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["created"] = created;
    j["seed"] = seed;
    j["entries"] = nlohmann::json::array();
    auto files = [](const std::vector<FileDigest>& v) {
      auto a = nlohmann::json::array();
      for (const auto& f : v) a.push_back({{"path", f.path}, {"crc64", f.crc64}, {"bytes", f.bytes}});
      return a;
    };
    for (const auto& e : entries) {
      j["entries"].push_back({{"stage", e.stage},
                              {"name", e.name},
                              {"inputs", files(e.inputs)},
                              {"config_hash", e.config_hash},
                              {"outputs", files(e.outputs)}});
    }
    return j;
  }
};

namespace detail {

inline FileDigest digest_file(const std::filesystem::path& p, const std::filesystem::path& base) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  Crc64 crc;
  std::vector<char> buf(1 << 20);
  std::uint64_t bytes = 0;
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    crc.process_bytes(buf.data(), static_cast<std::size_t>(got));
    bytes += static_cast<std::uint64_t>(got);
  }
  return {p.lexically_relative(base).generic_string(), hex64(crc.checksum()), bytes};
}

// A file, or every regular file below a directory in path order.
inline std::vector<FileDigest> digest_path(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (std::filesystem::is_regular_file(p)) return {digest_file(p, base)};
  if (!std::filesystem::is_directory(p)) throw IoError("no such file or directory: " + p.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(p)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FileDigest> out;
  for (const auto& f : files) out.push_back(digest_file(f, base));
  return out;
}

inline std::string config_hash(const nlohmann::json& config, std::uint64_t seed) {
  const std::string canon = config.dump() + "#" + std::to_string(seed);
  return hex64(crc64(canon.data(), canon.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage outputs.

inline void write_selection_csv(const std::filesystem::path& path, const Selection& sel) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,score\n";
  for (std::size_t i = 0; i < sel.ids.size(); ++i) {
    out << sel.ids[i] << ',' << detail::format_number(sel.scores[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

/// Scores the listed pool ids against the model threshold.
inline FilterResult write_filter_csv(const std::filesystem::path& path, const GmmModel& g, const VectorPool& pool,
                                     const std::vector<Id>& ids) {
  const IdMap map(pool.ids, pool.count());
  Matrix vectors(ids.size(), pool.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = map.row_of(ids[i]);
    if (!row) throw ValidationError("id " + std::to_string(ids[i]) + " is not in the pool");
    std::copy(pool.vectors.row(*row).begin(), pool.vectors.row(*row).end(), vectors.row(i).begin());
  }
  const auto r = filter_batch(g, ids, vectors, g.tau);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,typicality,accepted\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << detail::format_number(r.scores[i]) << ',' << (r.scores[i] >= g.tau ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
  return r;
}

// ---------------------------------------------------------------------------
// Runner.

class PipelineRunner {
 public:
  explicit PipelineRunner(PipelineSpec spec, std::ostream* log = nullptr) : spec_(std::move(spec)), log_(log) {}

  /// Checks stage kinds, names, input references, input paths and every
  /// config block. Nothing is written.
  void validate() {
    std::set<std::string> seen;
    outputs_.clear();
    for (const auto& st : spec_.stages) {
      const auto where = "stage '" + st.name + "'";
      if (st.name.empty() || st.name.find_first_of("/\\") != std::string::npos || st.name == "." ||
          st.name == "..") {
        throw ValidationError(where + ": invalid name");
      }
      if (!seen.insert(st.name).second) throw ValidationError(where + ": duplicate stage name");
      const auto& req = detail::required_inputs().at(st.kind);
      const auto& opt = detail::optional_inputs().at(st.kind);
      for (const auto& [key, value] : st.inputs.items()) {
        if (std::find(req.begin(), req.end(), key) == req.end() && std::find(opt.begin(), opt.end(), key) == opt.end()) {
          throw ValidationError(where + ": unknown input '" + key + "'");
        }
      }
      for (const auto& key : req) {
        if (!st.inputs.contains(key)) throw ValidationError(where + ": missing input '" + key + "'");
      }
      for (const auto& [key, value] : st.inputs.items()) {
        if (st.kind == StageKind::Fuse && key == "models") {
          if (!value.is_array() || value.empty()) throw ValidationError(where + ": 'models' must be a non-empty list");
          for (const auto& v : value) resolve(v, where);
        } else {
          resolve(value, where);
        }
      }
      try {
        check_config(st);
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": " + e.what());
      }
      outputs_[st.name] = output_dir(st) / detail::primary_output(st.kind);
    }
  }

  /// Validates, then runs every stage in order. The manifest is rewritten
  /// after each completed stage.
  RunManifest run() {
    validate();
    RunManifest manifest;
    manifest.created = detail::utc_timestamp();
    manifest.seed = spec_.seed;
    std::filesystem::create_directories(spec_.artifacts);
    write_manifest(manifest);
    for (const auto& st : spec_.stages) {
      if (log_) *log_ << "[" << st.name << "] " << to_string(st.kind) << '\n';
      ManifestEntry entry;
      entry.stage = std::string(to_string(st.kind));
      entry.name = st.name;
      entry.config_hash = detail::config_hash(st.config, spec_.seed);
      try {
        for (const auto& p : input_paths(st)) {
          for (auto& d : detail::digest_path(p, spec_.base_dir)) entry.inputs.push_back(std::move(d));
        }
        const auto dir = output_dir(st);
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        run_stage(st, dir);
        entry.outputs = detail::digest_path(dir, spec_.base_dir);
      } catch (const IoError& e) {
        throw IoError("stage '" + st.name + "': " + e.what());
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError(st.name, e.what());
      }
      manifest.entries.push_back(std::move(entry));
      write_manifest(manifest);
    }
    return manifest;
  }

  const PipelineSpec& spec() const noexcept { return spec_; }
  std::filesystem::path manifest_path() const { return spec_.artifacts / "manifest.json"; }

 private:
  std::filesystem::path output_dir(const StageSpec& st) const { return spec_.artifacts / st.name; }

  std::filesystem::path resolve(const nlohmann::json& v, const std::string& where) const {
    if (!v.is_string()) throw ValidationError(where + ": inputs must be strings");
    const auto s = v.get<std::string>();
    if (!s.empty() && s[0] == '@') {
      const auto it = outputs_.find(s.substr(1));
      if (it == outputs_.end()) throw ValidationError(where + ": '" + s + "' does not name an earlier stage");
      return it->second;
    }
    const auto p = (spec_.base_dir / s).lexically_normal();
    if (!std::filesystem::exists(p)) throw ValidationError(where + ": input '" + s + "' does not exist");
    return p;
  }

  std::filesystem::path input(const StageSpec& st, const std::string& key) const {
    return resolve(st.inputs.at(key), "stage '" + st.name + "'");
  }

  std::vector<std::filesystem::path> input_paths(const StageSpec& st) const {
    std::vector<std::filesystem::path> out;
    for (const auto& [key, value] : st.inputs.items()) {
      if (value.is_array()) {
        for (const auto& v : value) out.push_back(resolve(v, st.name));
      } else {
        out.push_back(resolve(value, st.name));
      }
    }
    return out;
  }

  void check_config(const StageSpec& st) const {
    switch (st.kind) {
      case StageKind::Index: index_config_from_json(st.config, spec_.seed); break;
      case StageKind::Select: al_config_from_json(st.config, spec_.seed); break;
      case StageKind::Ood: ood_config_from_json(st.config, spec_.seed); break;
      case StageKind::Fuse: fuse_config_from_json(st.config); break;
      case StageKind::Eval: eval_config_from_json(st.config, st.name); break;
      case StageKind::Bench: bench_stage_config_from_json(st.config); break;
    }
  }

  void run_stage(const StageSpec& st, const std::filesystem::path& dir) const {
    switch (st.kind) {
      case StageKind::Index: {
        const auto cfg = index_config_from_json(st.config, spec_.seed);
        AnnIndex::build(read_pool(input(st, "pool")), cfg).save(dir / "index.bin");
        break;
      }
      case StageKind::Select: {
        const auto cfg = al_config_from_json(st.config, spec_.seed);
        const auto index = AnnIndex::load(input(st, "index"));
        const auto labeled = read_labels(input(st, "labels"));
        std::optional<ProbeModel> model;
        if (cfg.strategy != Strategy::KCenter && cfg.strategy != Strategy::KCenterFull &&
            cfg.strategy != Strategy::Random) {
          ProbeOptions po;
          po.seed = cfg.seed;
          model = train_probe(labeled, index.reconstruct_batch(labeled.ids), po);
        }
        const auto sel = select_batch(index, labeled, model ? &*model : nullptr, cfg);
        write_selection_csv(dir / "batch.csv", sel);
        break;
      }
      case StageKind::Ood: {
        const auto cfg = ood_config_from_json(st.config, spec_.seed);
        const auto reference = read_pool(input(st, "reference"));
        auto g = fit_gmm(reference.vectors, cfg.gmm);
        g.tau = cfg.tau ? *cfg.tau : auto_threshold(g, reference.vectors, cfg.quantile);
        g.save(dir / "gmm.bin");
        const auto pool = read_pool(input(st, "pool"));
        std::vector<Id> ids;
        if (st.inputs.contains("ids")) {
          ids = read_id_column(input(st, "ids"));
        } else {
          for (std::size_t r = 0; r < pool.count(); ++r) ids.push_back(pool.id_at(r));
        }
        write_filter_csv(dir / "filter.csv", g, pool, ids);
        break;
      }
      case StageKind::Fuse: {
        const auto cfg = fuse_config_from_json(st.config);
        std::vector<std::filesystem::path> dirs;
        for (const auto& v : st.inputs.at("models")) dirs.push_back(resolve(v, st.name));
        fuse_directory(dirs, dir, cfg.nms, cfg.threads);
        break;
      }
      case StageKind::Eval: {
        const auto cfg = eval_config_from_json(st.config, st.name);
        const auto report = evaluate_dataset(input(st, "pred"), input(st, "gt"), cfg.eval);
        write_report_csv(dir / "report.csv", {{cfg.method, report}});
        break;
      }
      case StageKind::Bench: {
        const auto cfg = bench_stage_config_from_json(st.config);
        if (cfg.curves) {
          write_curves_csv(dir / "bench.csv", run_al_loop(cfg.bench, log_));
        } else {
          write_scaling_csv(dir / "bench.csv", run_scaling_bench(cfg.bench, log_));
        }
        break;
      }
    }
  }

  void write_manifest(const RunManifest& m) const {
    std::ofstream out(manifest_path(), std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + manifest_path().string());
    out << m.to_json().dump(2) << '\n';
  }

 private:
  PipelineSpec spec_;
  std::ostream* log_;
  std::map<std::string, std::filesystem::path> outputs_;
};

inline RunManifest run_pipeline(const PipelineSpec& spec, std::ostream* log = nullptr) {
  return PipelineRunner(spec, log).run();
}

}  // namespace curatekit
