#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "curatekit/fusion/fuse.hpp"
#include "curatekit/fusion/synthetic.hpp"
#include "oracles/fusion_oracle.hpp"
#include "test_util.hpp"

using namespace curatekit;

namespace {

const std::vector<std::string> kModels{"m1", "m2", "m3"};

NmsConfig config(NmsVariant v = NmsVariant::Standard) {
  NmsConfig c;
  c.variant = v;
  c.models = kModels;
  return c;
}

Proposal prop(Box b, std::string model, double score = 0.9, std::string label = "car") {
  return {b, std::move(label), score, std::move(model)};
}

ConsensusCluster candidate(Box b, double consensus, std::string label = "car") {
  ConsensusCluster c;
  c.label = std::move(label);
  c.members = {prop(b, "m1")};
  c.fused = b;
  c.consensus = consensus;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Iou, HandGeometry) {
  const Box a{0, 0, 10, 10};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, {20, 20, 30, 30}), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, {10, 0, 20, 10}), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, {5, 0, 15, 10}), 50.0 / 150.0);
}

TEST(Iou, DiouOfConcentricBoxesIsIou) {
  const Box a{0, 0, 10, 10}, b{2, 2, 8, 8};
  EXPECT_DOUBLE_EQ(diou(a, b), iou(a, b));
  const Box c{5, 0, 15, 10};
  // centers 5 apart, enclosing box 15 x 10.
  EXPECT_DOUBLE_EQ(diou(a, c), 1.0 / 3.0 - 25.0 / 325.0);
}

TEST(Voc, EmptyFileKeepsMetadata) {
  const auto dir = testutil::temp_dir("voc_empty") / "m1";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "a.xml") << "<annotation><filename>a.jpg</filename>"
                                  "<size><width>64</width><height>48</height><depth>3</depth></size></annotation>";
  const auto a = parse_voc(dir / "a.xml");
  EXPECT_TRUE(a.proposals.empty());
  EXPECT_EQ(a.meta.filename, "a.jpg");
  EXPECT_EQ(a.meta.width, 64);
  EXPECT_EQ(a.meta.height, 48);
}

TEST(Voc, MissingConfidenceDefaultsToOne) {
  const auto dir = testutil::temp_dir("voc_conf") / "gdino";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "a.xml") << "<annotation><filename>a.jpg</filename><object><name>dog</name>"
                                  "<bndbox><xmin>1</xmin><ymin>2</ymin><xmax>3.5</xmax><ymax>4</ymax></bndbox>"
                                  "</object></annotation>";
  const auto a = parse_voc(dir / "a.xml");
  ASSERT_EQ(a.proposals.size(), 1u);
  EXPECT_EQ(a.proposals[0].score, 1.0);
  EXPECT_EQ(a.proposals[0].model_id, "gdino");
  EXPECT_EQ(a.proposals[0].box, (Box{1, 2, 3.5, 4}));
  EXPECT_EQ(parse_voc(dir / "a.xml", "explicit").proposals[0].model_id, "explicit");
}

TEST(Voc, RejectsMalformedInput) {
  const auto dir = testutil::temp_dir("voc_bad");
  std::ofstream(dir / "broken.xml") << "<annotation><object>";
  EXPECT_THROW(parse_voc(dir / "broken.xml"), ValidationError);
  std::ofstream(dir / "flipped.xml") << "<annotation><object><name>x</name><bndbox><xmin>5</xmin><ymin>0</ymin>"
                                        "<xmax>5</xmax><ymax>3</ymax></bndbox></object></annotation>";
  EXPECT_THROW(parse_voc(dir / "flipped.xml"), ValidationError);
  EXPECT_THROW(parse_voc(dir / "absent.xml"), IoError);
}

TEST(Voc, WriteParseRoundTripAndByteStable) {
  const auto dir = testutil::temp_dir("voc_rt") / "m2";
  std::filesystem::create_directories(dir);
  VocAnnotation a{{"", "x&y.jpg", 640, 480, 3}, {}};
  a.proposals.push_back(prop({0.1, 0.2, 10.3, 20.7}, "m2", 2.0 / 3.0, "traffic <light>"));
  a.proposals.push_back(prop({1, 2, 3, 4}, "m2", 1e-7, "dog"));
  write_voc(a, dir / "a.xml");
  EXPECT_EQ(parse_voc(dir / "a.xml"), a);
  write_voc(a, dir / "b.xml");
  EXPECT_EQ(slurp(dir / "a.xml"), slurp(dir / "b.xml"));

  const VocAnnotation empty{{"", "e.jpg", 1, 1, 3}, {}};
  write_voc(empty, dir / "e.xml");
  EXPECT_EQ(parse_voc(dir / "e.xml"), empty);
}

TEST(BuildClusters, UnanimousDetection) {
  const Box b{10, 10, 50, 50};
  const auto cs = build_clusters({prop(b, "m1"), prop(b, "m2"), prop(b, "m3")}, config());
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_DOUBLE_EQ(cs[0].consensus, 1.0);
  EXPECT_EQ(cs[0].fused, b);
}

TEST(BuildClusters, DisjointBoxesAreSingletons) {
  const auto cs = build_clusters({prop({0, 0, 10, 10}, "m1"), prop({50, 50, 60, 60}, "m2")}, config());
  ASSERT_EQ(cs.size(), 2u);
  for (const auto& c : cs) EXPECT_DOUBLE_EQ(c.consensus, 1.0 / 3.0);
}

TEST(BuildClusters, PartialSupport) {
  const auto cs = build_clusters({prop({0, 0, 10, 10}, "m1"), prop({2, 0, 12, 10}, "m2")}, config());
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_DOUBLE_EQ(cs[0].consensus, 2.0 / 3.0);
  EXPECT_EQ(cs[0].fused, (Box{1, 0, 11, 10}));
}

TEST(BuildClusters, SameModelNeverSupportsItsOwnAnchor) {
  const Box b{0, 0, 10, 10};
  const auto cs = build_clusters({prop(b, "m1", 0.9), prop(b, "m1", 0.8)}, config());
  EXPECT_EQ(cs.size(), 2u);
}

TEST(BuildClusters, LabelsNeverMix) {
  const Box b{0, 0, 10, 10};
  const auto cs = build_clusters({prop(b, "m1", 0.9, "car"), prop(b, "m2", 0.9, "dog")}, config());
  EXPECT_EQ(cs.size(), 2u);
}

TEST(BuildClusters, UnknownModelRejected) {
  EXPECT_THROW(build_clusters({prop({0, 0, 1, 1}, "m9")}, config()), ValidationError);
}

TEST(BuildClusters, MatchesBruteForceOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ps = oracle::random_instance(rng, kModels);
    const auto got = build_clusters(ps, config());
    const auto want = oracle::clusters(ps, kModels, 0.5);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    std::size_t members = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].label, want[i].label);
      EXPECT_EQ(got[i].members, want[i].members);
      EXPECT_EQ(got[i].fused, want[i].fused);
      EXPECT_EQ(got[i].consensus, want[i].consensus);
      members += got[i].members.size();
      for (const auto& m : got[i].members) EXPECT_EQ(m.label, got[i].label);
      EXPECT_TRUE(got[i].fused.valid());
    }
    EXPECT_EQ(members, ps.size());
  }
}

TEST(ApplyNms, SingleCandidatePassesEveryVariant) {
  for (auto v : {NmsVariant::Standard, NmsVariant::Soft, NmsVariant::DIou, NmsVariant::Weighted,
                 NmsVariant::Adaptive, NmsVariant::Cluster}) {
    const auto out = apply_nms({candidate({0, 0, 10, 10}, 2.0 / 3.0)}, config(v));
    ASSERT_EQ(out.size(), 1u) << to_string(v);
    EXPECT_EQ(out[0].box, (Box{0, 0, 10, 10}));
    EXPECT_DOUBLE_EQ(out[0].score, 2.0 / 3.0);
  }
}

TEST(ApplyNms, IdenticalPairStandard) {
  const Box b{0, 0, 10, 10};
  const auto out = apply_nms({candidate(b, 0.8), candidate(b, 0.9)}, config());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
}

TEST(ApplyNms, IdenticalPairSoft) {
  const Box b{0, 0, 10, 10};
  const auto out = apply_nms({candidate(b, 0.9), candidate(b, 0.8)}, config(NmsVariant::Soft));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
  EXPECT_NEAR(out[1].score, 0.8 * std::exp(-2.0), 1e-12);
  EXPECT_NEAR(out[1].score, 0.108, 5e-4);
}

TEST(ApplyNms, ConcentricDiouMatchesStandard) {
  std::vector<ConsensusCluster> cs{candidate({0, 0, 20, 20}, 1.0), candidate({2, 2, 18, 18}, 2.0 / 3.0),
                                   candidate({8, 8, 12, 12}, 1.0 / 3.0)};
  EXPECT_EQ(apply_nms(cs, config(NmsVariant::DIou)), apply_nms(cs, config()));
}

TEST(ApplyNms, UnknownVariantRejected) { EXPECT_THROW(parse_nms_variant("fancy"), ValidationError); }

TEST(ApplyNms, WeightedMergesCoordinates) {
  const auto out = apply_nms({candidate({0, 0, 10, 10}, 1.0), candidate({1, 0, 11, 10}, 0.5)},
                             config(NmsVariant::Weighted));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0].box.xmin, 0.5 / 1.5, 1e-12);
  EXPECT_NEAR(out[0].box.xmax, 10.0 + 0.5 / 1.5, 1e-12);
  EXPECT_DOUBLE_EQ(out[0].score, 1.0);
}

TEST(ApplyNms, AdaptiveKeepsCrowds) {
  // Three mutually overlapping boxes: the top box's density shields all but
  // its closest duplicate.
  std::vector<ConsensusCluster> cs{candidate({0, 0, 10, 10}, 1.0), candidate({1, 0, 11, 10}, 2.0 / 3.0),
                                   candidate({2, 0, 12, 10}, 1.0 / 3.0)};
  EXPECT_EQ(apply_nms(cs, config()).size(), 1u);
  const auto out = apply_nms(cs, config(NmsVariant::Adaptive));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].box, (Box{2, 0, 12, 10}));
}

TEST(ApplyNms, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ps = oracle::random_instance(rng, kModels);
    const auto cs = build_clusters(ps, config());
    const auto oc = oracle::clusters(ps, kModels, 0.5);

    const auto hard = apply_nms(cs, config());
    const auto want = oracle::standard_nms(oc, 0.5);
    ASSERT_EQ(hard.size(), want.size()) << trial;
    for (std::size_t i = 0; i < hard.size(); ++i) {
      EXPECT_EQ(hard[i].box, want[i].box);
      EXPECT_EQ(hard[i].label, want[i].label);
      EXPECT_EQ(hard[i].score, want[i].score);
    }
    EXPECT_EQ(apply_nms(cs, config(NmsVariant::Cluster)), hard);

    const auto soft = apply_nms(cs, config(NmsVariant::Soft));
    const auto wsoft = oracle::soft_nms(oc, 0.5, 0.001);
    ASSERT_EQ(soft.size(), wsoft.size()) << trial;
    for (std::size_t i = 0; i < soft.size(); ++i) {
      EXPECT_EQ(soft[i].box, wsoft[i].box);
      EXPECT_NEAR(soft[i].score, wsoft[i].score, 1e-6);
    }
    EXPECT_GE(soft.size(), hard.size());

    for (std::size_t i = 0; i < hard.size(); ++i) {
      for (std::size_t j = i + 1; j < hard.size(); ++j) {
        if (hard[i].label == hard[j].label) {
          EXPECT_LE(iou(hard[i].box, hard[j].box), 0.5);
        }
      }
    }
  }
}

TEST(FuseImage, SingleModelPassThrough) {
  const auto root = testutil::temp_dir("fuse_single");
  std::filesystem::create_directories(root / "m1");
  VocAnnotation a{{"", "a.jpg", 100, 100, 3}, {prop({0, 0, 10, 10}, "m1"), prop({50, 50, 70, 70}, "m1", 0.5, "dog")}};
  write_voc(a, root / "m1" / "a.xml");
  const auto f = fuse_image({root / "m1" / "a.xml"}, config());
  ASSERT_EQ(f.boxes.size(), 2u);
  for (const auto& b : f.boxes) EXPECT_DOUBLE_EQ(b.score, 1.0 / 3.0);
  EXPECT_EQ(f.meta.filename, "a.jpg");
}

TEST(FuseImage, UnanimousTriple) {
  const auto root = testutil::temp_dir("fuse_triple");
  std::vector<std::filesystem::path> files;
  for (const auto& m : kModels) {
    std::filesystem::create_directories(root / m);
    write_voc({{"", "a.jpg", 100, 100, 3}, {prop({5, 5, 40, 40}, m)}}, root / m / "a.xml");
    files.push_back(root / m / "a.xml");
  }
  const auto f = fuse_image(files, config());
  ASSERT_EQ(f.boxes.size(), 1u);
  EXPECT_DOUBLE_EQ(f.boxes[0].score, 1.0);
}

TEST(FuseImage, NeedsOneParsableFile) {
  const auto root = testutil::temp_dir("fuse_none") / "m1";
  std::filesystem::create_directories(root);
  std::ofstream(root / "a.xml") << "<nope";
  EXPECT_THROW(fuse_image({root / "a.xml"}, config()), ValidationError);
  EXPECT_THROW(fuse_image({}, config()), ValidationError);
}

TEST(FuseDirectory, SerialAndParallelAgree) {
  const auto root = testutil::temp_dir("fuse_dir");
  SyntheticDetectionConfig sc;
  sc.models = kModels;
  const auto corpus = make_detection_corpus(sc);
  write_detection_corpus(corpus, kModels, root);
  std::vector<std::filesystem::path> dirs;
  for (const auto& m : kModels) dirs.push_back(root / m);
  // Reverse model order must not matter either.
  std::vector<std::filesystem::path> rdirs(dirs.rbegin(), dirs.rend());
  const auto serial = fuse_directory(dirs, root / "serial", config(NmsVariant::Soft), 1);
  fuse_directory(rdirs, root / "parallel", config(NmsVariant::Soft), 4);
  EXPECT_EQ(serial.size(), 20u);
  for (const auto& id : corpus.image_ids) {
    EXPECT_EQ(slurp(root / "serial" / (id + ".xml")), slurp(root / "parallel" / (id + ".xml"))) << id;
  }
  EXPECT_EQ(slurp(root / "serial" / "fusion_audit.csv"), slurp(root / "parallel" / "fusion_audit.csv"));
}
