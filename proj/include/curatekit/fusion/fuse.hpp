#pragma once

// Per-image fusion tasks and the directory driver that runs them in parallel.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "curatekit/fusion/consensus.hpp"
#include "curatekit/fusion/voc.hpp"

namespace curatekit {

struct FusedAnnotation {
  ImageMeta meta;
  std::vector<FusedBox> boxes;
  std::size_t clusters = 0;
  double mean_consensus = 0.0;  // over clusters before NMS
  std::vector<std::string> warnings;

  VocAnnotation to_voc() const {
    VocAnnotation a{meta, {}};
    for (const auto& b : boxes) a.proposals.push_back({b.box, b.label, b.score, "fused"});
    return a;
  }
};

/// parse -> build_clusters -> apply_nms for one image. Files that fail to
/// parse are skipped with a warning; at least one must succeed. When the
/// config names no ensemble, the models are the files' directory names.
inline FusedAnnotation fuse_image(const std::vector<std::filesystem::path>& files, NmsConfig cfg) {
  if (files.empty()) throw ValidationError("fuse_image: no annotation files");
  if (cfg.models.empty()) {
    std::set<std::string> names;
    for (const auto& f : files) names.insert(f.parent_path().filename().string());
    cfg.models.assign(names.begin(), names.end());
  }
  FusedAnnotation out;
  std::vector<Proposal> all;
  bool any = false;
  for (const auto& f : files) {
    try {
      auto a = parse_voc(f);
      if (!any) out.meta = a.meta;
      any = true;
      all.insert(all.end(), a.proposals.begin(), a.proposals.end());
    } catch (const Error& e) {
      out.warnings.push_back(e.what());
    }
  }
  if (!any) throw ValidationError("fuse_image: zero parsable files for " + files.front().stem().string());
  const auto clusters = build_clusters(std::move(all), cfg);
  out.clusters = clusters.size();
  for (const auto& c : clusters) out.mean_consensus += c.consensus;
  if (!clusters.empty()) out.mean_consensus /= static_cast<double>(clusters.size());
  out.boxes = apply_nms(clusters, cfg);
  return out;
}

struct FusionAuditRow {
  std::string image;
  std::size_t clusters = 0;
  std::size_t kept = 0;
  double mean_consensus = 0.0;
  std::size_t warnings = 0;
};

inline std::vector<std::string> list_annotation_ids(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".xml") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::string model_name(const std::filesystem::path& dir) {
  auto p = dir;
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

/// Fuses every image found under the model directories into `out_dir`
/// (one VOC file per image plus fusion_audit.csv). Results do not depend on
/// `threads` or on scheduling.
inline std::vector<FusionAuditRow> fuse_directory(const std::vector<std::filesystem::path>& model_dirs,
                                                  const std::filesystem::path& out_dir, NmsConfig cfg,
                                                  std::size_t threads = 0) {
  if (model_dirs.empty()) throw ValidationError("fuse: no model directories");
  cfg.models.clear();
  for (const auto& d : model_dirs) cfg.models.push_back(model_name(d));
  cfg.validate();
  std::set<std::string> images;
  for (const auto& d : model_dirs) {
    for (auto& id : list_annotation_ids(d)) images.insert(std::move(id));
  }
  const std::vector<std::string> ids(images.begin(), images.end());
  std::filesystem::create_directories(out_dir);

  std::vector<FusionAuditRow> rows(ids.size());
  std::vector<std::exception_ptr> errors(ids.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < ids.size();) {
      try {
        std::vector<std::filesystem::path> files;
        for (const auto& d : model_dirs) {
          const auto f = d / (ids[i] + ".xml");
          if (std::filesystem::exists(f)) files.push_back(f);
        }
        const auto fused = fuse_image(files, cfg);
        write_voc(fused.to_voc(), out_dir / (ids[i] + ".xml"));
        rows[i] = {ids[i], fused.clusters, fused.boxes.size(), fused.mean_consensus, fused.warnings.size()};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(ids.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ofstream audit(out_dir / "fusion_audit.csv", std::ios::binary | std::ios::trunc);
  if (!audit) throw IoError("cannot write fusion audit in " + out_dir.string());
  audit << "image,clusters,kept,mean_consensus,variant\n";
  for (const auto& r : rows) {
    audit << r.image << ',' << r.clusters << ',' << r.kept << ',' << detail::format_number(r.mean_consensus) << ','
          << to_string(cfg.variant) << '\n';
  }
  return rows;
}

}  // namespace curatekit
