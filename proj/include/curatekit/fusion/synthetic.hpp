#pragma once

// Synthetic ground truth plus noisy per-model proposals, standing in for
// detector outputs.

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "curatekit/fusion/voc.hpp"

namespace curatekit {

struct SyntheticDetectionConfig {
  std::size_t images = 20;
  std::vector<std::string> models = {"detic", "gdino", "owlvit"};
  std::vector<std::string> classes = {"car", "person", "dog"};
  std::size_t max_objects = 6;
  double detect_prob = 0.8;
  double jitter = 0.06;          // box noise as a fraction of object size
  double duplicate_prob = 0.25;  // extra near-duplicate box from one model
  double false_positives = 0.7;  // mean spurious boxes per model and image
  int width = 640;
  int height = 480;
  std::uint64_t seed = 7;
};

struct SyntheticDetectionCorpus {
  std::vector<std::string> image_ids;
  std::vector<VocAnnotation> ground_truth;
  std::vector<std::vector<VocAnnotation>> per_model;  // [model][image]
};

inline SyntheticDetectionCorpus make_detection_corpus(const SyntheticDetectionConfig& c) {
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::poisson_distribution<int> fp(c.false_positives);
  SyntheticDetectionCorpus out;
  out.per_model.resize(c.models.size());
  const double w = c.width, h = c.height;
  auto clamp_box = [&](Box b) {
    b.xmin = std::clamp(b.xmin, 0.0, w - 2);
    b.ymin = std::clamp(b.ymin, 0.0, h - 2);
    b.xmax = std::clamp(b.xmax, b.xmin + 1, w);
    b.ymax = std::clamp(b.ymax, b.ymin + 1, h);
    return b;
  };
  auto round_box = [](Box b) {
    auto r = [](double v) { return std::round(v * 10.0) / 10.0; };
    return Box{r(b.xmin), r(b.ymin), r(b.xmax), r(b.ymax)};
  };
  auto random_box = [&] {
    // Log-uniform side lengths cover small, medium and large objects.
    const double bw = w * std::exp(std::log(0.04) + u(rng) * (std::log(0.6) - std::log(0.04)));
    const double bh = h * std::exp(std::log(0.04) + u(rng) * (std::log(0.6) - std::log(0.04)));
    const double x0 = u(rng) * (w - bw), y0 = u(rng) * (h - bh);
    return round_box(clamp_box({x0, y0, x0 + bw, y0 + bh}));
  };
  auto jittered = [&](const Box& b, double scale) {
    const double sw = b.width() * scale, sh = b.height() * scale;
    return round_box(clamp_box({b.xmin + sw * g(rng), b.ymin + sh * g(rng), b.xmax + sw * g(rng), b.ymax + sh * g(rng)}));
  };
  auto score = [&](double lo, double hi) { return std::round((lo + (hi - lo) * u(rng)) * 1000.0) / 1000.0; };
  std::uniform_int_distribution<std::size_t> nobj(1, std::max<std::size_t>(c.max_objects, 1));
  std::uniform_int_distribution<std::size_t> cls(0, c.classes.size() - 1);

  for (std::size_t i = 0; i < c.images; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu", i);
    out.image_ids.emplace_back(name);
    const ImageMeta meta{"", out.image_ids.back() + ".jpg", c.width, c.height, 3};
    VocAnnotation gt{meta, {}};
    const std::size_t n = nobj(rng);
    for (std::size_t k = 0; k < n; ++k) gt.proposals.push_back({random_box(), c.classes[cls(rng)], 1.0, "gt"});
    for (std::size_t m = 0; m < c.models.size(); ++m) {
      VocAnnotation a{meta, {}};
      for (const auto& obj : gt.proposals) {
        if (u(rng) > c.detect_prob) continue;
        a.proposals.push_back({jittered(obj.box, c.jitter), obj.label, score(0.5, 1.0), c.models[m]});
        if (u(rng) < c.duplicate_prob) {
          a.proposals.push_back({jittered(obj.box, 2.0 * c.jitter), obj.label, score(0.3, 0.8), c.models[m]});
        }
      }
      for (int f = fp(rng); f > 0; --f) a.proposals.push_back({random_box(), c.classes[cls(rng)], score(0.05, 0.6), c.models[m]});
      out.per_model[m].push_back(std::move(a));
    }
    out.ground_truth.push_back(std::move(gt));
  }
  return out;
}

/// Writes <root>/gt/<id>.xml and <root>/<model>/<id>.xml.
inline void write_detection_corpus(const SyntheticDetectionCorpus& corpus, const std::vector<std::string>& models,
                                   const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "gt");
  for (const auto& m : models) std::filesystem::create_directories(root / m);
  for (std::size_t i = 0; i < corpus.image_ids.size(); ++i) {
    write_voc(corpus.ground_truth[i], root / "gt" / (corpus.image_ids[i] + ".xml"));
    for (std::size_t m = 0; m < models.size(); ++m) {
      write_voc(corpus.per_model[m][i], root / models[m] / (corpus.image_ids[i] + ".xml"));
    }
  }
}

}  // namespace curatekit
