#pragma once

// A small end-to-end workspace: vector pool, seed labels, three detector
// outputs plus ground truth, and a run spec chaining every data stage.

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "curatekit/bench/synthetic.hpp"
#include "curatekit/fusion/synthetic.hpp"
#include "curatekit/store.hpp"

namespace curatekit::fixture {

inline nlohmann::json pipeline_spec_json() {
  return nlohmann::json::parse(R"({
    "seed": 11,
    "artifacts": "artifacts",
    "stages": [
      {"stage": "index", "name": "idx", "inputs": {"pool": "pool.bin"},
       "config": {"kind": "ivfflat", "nlist": 16, "nprobe": 4}},
      {"stage": "select", "name": "pick", "inputs": {"index": "@idx", "labels": "labels.csv"},
       "config": {"strategy": "kcenter", "batch_size": 40, "candidate_pool_size": 400}},
      {"stage": "ood", "name": "screen", "inputs": {"reference": "pool.bin", "pool": "pool.bin", "ids": "@pick"},
       "config": {"k": 4, "tau": "auto"}},
      {"stage": "fuse", "name": "fused", "inputs": {"models": ["det/detic", "det/gdino", "det/owlvit"]},
       "config": {"variant": "soft", "tau_iou": 0.5, "threads": 2}},
      {"stage": "eval", "name": "report", "inputs": {"pred": "@fused", "gt": "det/gt"},
       "config": {"method": "soft-nms"}}
    ]
  })");
}

/// Populates `root` and returns the spec path.
inline std::filesystem::path write_pipeline_fixture(const std::filesystem::path& root, std::size_t images = 20) {
  std::filesystem::create_directories(root);
  TaskConfig tc;
  const auto task = gen_synthetic(2000, 16, tc, 5);
  write_pool(task.pool, root / "pool.bin");
  LabeledPool labeled;
  for (Id id = 0; id < 30; ++id) labeled.add(id, task.labels[static_cast<std::size_t>(id)]);
  write_labels(labeled, root / "labels.csv");

  SyntheticDetectionConfig dc;
  dc.images = images;
  write_detection_corpus(make_detection_corpus(dc), dc.models, root / "det");

  const auto spec = root / "run.json";
  std::ofstream(spec) << pipeline_spec_json().dump(2) << '\n';
  return spec;
}

}  // namespace curatekit::fixture
