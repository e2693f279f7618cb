// curatekit command-line entry point.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

#include "curatekit/bench/memory.hpp"
#include "curatekit/fusion/synthetic.hpp"
#include "curatekit/pipeline.hpp"

CURATEKIT_TRACK_ALLOCATIONS()

using namespace curatekit;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kValidation = 1, kStage = 2, kIo = 3 };

struct IndexArgs {
  std::string kind = "flat";
  IndexConfig cfg;
  std::string in, out;
};

struct SearchArgs {
  std::string index, queries, out;
  std::size_t k = 10;
  std::size_t nprobe = 0;
};

struct SelectArgs {
  std::string strategy = "kcenter";
  AlConfig cfg;
  std::string index, labels, out;
};

struct FitArgs {
  std::string covariance = "diagonal";
  GmmOptions opt;
  double quantile = 0.05;
  std::string in, out;
};

struct FilterArgs {
  std::string gmm, tau = "auto", in, pool, out;
};

struct FuseArgs {
  std::vector<std::string> models;
  std::string variant = "standard";
  NmsConfig cfg;
  std::size_t threads = 0;
  std::string out;
};

struct EvalArgs {
  std::string pred, gt, out, method = "fused";
  std::vector<std::string> vocabulary;
  double iou = 0.5;
};

struct BenchArgs {
  std::string config, out;
};

struct SynthPoolArgs {
  std::size_t n = 10000, d = 128, seed_labels = 0;
  std::uint64_t seed = 1;
  TaskConfig task;
  std::string out, labels, hidden;
};

struct SynthDetArgs {
  SyntheticDetectionConfig cfg;
  std::string out;
};

void run_index_build(IndexArgs a) {
  a.cfg.kind = parse_index_kind(a.kind);
  const auto index = AnnIndex::build(read_pool(a.in), a.cfg);
  index.save(a.out);
  std::cout << "built " << to_string(index.config().kind) << " index over " << index.size() << " vectors -> " << a.out
            << '\n';
}

void run_index_search(const SearchArgs& a) {
  const auto index = AnnIndex::load(a.index);
  const auto queries = read_pool(a.queries);
  std::ofstream out(a.out, std::ios::trunc);
  if (!out) throw IoError("cannot write " + a.out);
  out << "query,rank,id,distance\n";
  std::optional<std::size_t> nprobe;
  if (a.nprobe > 0) nprobe = a.nprobe;
  for (std::size_t q = 0; q < queries.count(); ++q) {
    const auto hits = index.search(queries.vectors.row(q), a.k, nullptr, nprobe);
    for (std::size_t r = 0; r < hits.size(); ++r) {
      out << queries.id_at(q) << ',' << r << ',' << hits[r].id << ',' << detail::format_number(hits[r].distance)
          << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + a.out);
}

void run_select(SelectArgs a) {
  a.cfg.strategy = parse_strategy(a.strategy);
  a.cfg.validate();
  const auto index = AnnIndex::load(a.index);
  const auto labeled = read_labels(a.labels);
  std::optional<ProbeModel> model;
  if (a.cfg.strategy != Strategy::KCenter && a.cfg.strategy != Strategy::KCenterFull &&
      a.cfg.strategy != Strategy::Random) {
    model = fit_probe(index, labeled, a.cfg.seed);
  }
  const auto sel = select_batch(index, labeled, model ? &*model : nullptr, a.cfg);
  write_selection_csv(a.out, sel);
  std::cout << "selected " << sel.ids.size() << " ids" << (sel.partial ? " (partial batch)" : "") << " -> " << a.out
            << '\n';
}

void run_ood_fit(FitArgs a) {
  a.opt.covariance = parse_covariance(a.covariance);
  const auto reference = read_pool(a.in);
  auto g = fit_gmm(reference.vectors, a.opt);
  g.tau = auto_threshold(g, reference.vectors, a.quantile);
  g.save(a.out);
  std::cout << "fitted " << g.k() << " components in " << g.iterations << " iterations"
            << (g.converged ? "" : " (not converged)") << ", tau=" << g.tau << " -> " << a.out << '\n';
}

void run_ood_filter(const FilterArgs& a) {
  auto g = GmmModel::load(a.gmm);
  if (a.tau != "auto") {
    try {
      g.tau = std::stod(a.tau);
    } catch (const std::exception&) {
      throw ValidationError("--tau must be a number in [0, 1] or 'auto'");
    }
  } else if (std::isnan(g.tau)) {
    throw ValidationError("model carries no threshold; pass --tau");
  }
  const auto r = write_filter_csv(a.out, g, read_pool(a.pool), read_id_column(a.in));
  std::cout << "accepted " << r.accepted.size() << ", rejected " << r.rejected.size() << " -> " << a.out << '\n';
}

void run_fuse(FuseArgs a) {
  a.cfg.variant = parse_nms_variant(a.variant);
  std::vector<fs::path> dirs(a.models.begin(), a.models.end());
  const auto rows = fuse_directory(dirs, a.out, a.cfg, a.threads);
  std::size_t kept = 0;
  for (const auto& r : rows) kept += r.kept;
  std::cout << "fused " << rows.size() << " images, " << kept << " boxes -> " << a.out << '\n';
}

void run_eval(const EvalArgs& a) {
  EvalConfig cfg;
  cfg.vocabulary = a.vocabulary;
  cfg.iou_thresh = a.iou;
  const auto r = evaluate_dataset(a.pred, a.gt, cfg);
  write_report_csv(a.out, {{a.method, r}});
  std::cout << "precision " << r.precision << ", recall " << r.recall << ", mAP@0.5 " << r.map50 << " -> " << a.out
            << '\n';
}

void run_synth_pool(const SynthPoolArgs& a) {
  const auto t = gen_synthetic(a.n, a.d, a.task, a.seed);
  write_pool(t.pool, a.out);
  if (!a.hidden.empty()) {
    LabeledPool all;
    for (std::size_t i = 0; i < t.labels.size(); ++i) all.add(t.pool.id_at(i), t.labels[i]);
    write_labels(all, a.hidden);
  }
  if (!a.labels.empty()) write_labels(seed_labels(t, std::max<std::size_t>(a.seed_labels, 2), a.seed), a.labels);
  std::cout << "wrote " << t.pool.count() << " x " << t.pool.dim() << " pool -> " << a.out << '\n';
}

void run_synth_detections(const SynthDetArgs& a) {
  write_detection_corpus(make_detection_corpus(a.cfg), a.cfg.models, a.out);
  std::cout << "wrote " << a.cfg.images << " images for " << a.cfg.models.size() << " models plus gt -> " << a.out
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curatekit: vector-search data curation engine"};
  app.require_subcommand(1);
  std::function<void()> action;

  auto* index = app.add_subcommand("index", "Build or query an ANN index")->require_subcommand(1);
  IndexArgs ia;
  auto* build = index->add_subcommand("build", "Build an index from a vector pool");
  build->add_option("--kind", ia.kind, "flat | ivfflat | ivfpq | hnsw")->capture_default_str();
  build->add_option("--nlist", ia.cfg.nlist, "IVF cells (0: 4*sqrt(N))")->capture_default_str();
  build->add_option("--nprobe", ia.cfg.nprobe, "IVF cells visited per query")->capture_default_str();
  build->add_option("--pq-m", ia.cfg.pq_m, "PQ sub-vectors")->capture_default_str();
  build->add_option("--pq-bits", ia.cfg.pq_bits, "bits per PQ code (4 or 8)")->capture_default_str();
  build->add_option("--hnsw-m", ia.cfg.hnsw_m, "HNSW graph degree")->capture_default_str();
  build->add_option("--ef-construction", ia.cfg.ef_construction)->capture_default_str();
  build->add_option("--ef-search", ia.cfg.ef_search)->capture_default_str();
  build->add_option("--kmeans-iterations", ia.cfg.kmeans_iterations)->capture_default_str();
  build->add_option("--train-size", ia.cfg.train_size, "k-means sample (0: automatic)")->capture_default_str();
  build->add_option("--seed", ia.cfg.seed)->capture_default_str();
  build->add_option("--in", ia.in, "vector pool file")->required();
  build->add_option("--out", ia.out, "index file")->required();
  build->callback([&] { action = [&] { run_index_build(ia); }; });

  SearchArgs sa;
  auto* search = index->add_subcommand("search", "k-NN search for every vector of a query pool");
  search->add_option("--index", sa.index)->required();
  search->add_option("--queries", sa.queries, "vector pool of queries")->required();
  search->add_option("--k", sa.k)->capture_default_str();
  search->add_option("--nprobe", sa.nprobe, "override the stored nprobe (IVF)");
  search->add_option("--out", sa.out, "CSV: query,rank,id,distance")->required();
  search->callback([&] { action = [&] { run_index_search(sa); }; });

  auto* al = app.add_subcommand("al", "Active-learning batch selection")->require_subcommand(1);
  SelectArgs sel;
  auto* select = al->add_subcommand("select", "Select the next batch to label");
  select->add_option("--strategy", sel.strategy,
                     "kcenter | kcenter-full | margin | entropy | representative | icd | random")
      ->capture_default_str();
  select->add_option("--batch", sel.cfg.batch_size, "B")->capture_default_str();
  select->add_option("--nc", sel.cfg.candidate_pool_size, "K-Center candidate pool N_c")->capture_default_str();
  select->add_option("--ks", sel.cfg.neighborhood_size, "local neighborhood K_s")->capture_default_str();
  select->add_flag("--per-class-centroids", sel.cfg.per_class_centroids);
  select->add_option("--seed", sel.cfg.seed)->capture_default_str();
  select->add_option("--index", sel.index)->required();
  select->add_option("--labels", sel.labels, "CSV id,label")->required();
  select->add_option("--out", sel.out, "CSV id,score")->required();
  select->callback([&] { action = [&] { run_select(sel); }; });

  auto* ood = app.add_subcommand("ood", "GMM typicality filter")->require_subcommand(1);
  FitArgs fa;
  auto* fit = ood->add_subcommand("fit", "Fit a GMM on in-distribution vectors");
  fit->add_option("--k", fa.opt.k, "components")->capture_default_str();
  fit->add_option("--covariance", fa.covariance, "diagonal | full")->capture_default_str();
  fit->add_option("--reg-eps", fa.opt.reg_eps)->capture_default_str();
  fit->add_option("--max-iter", fa.opt.max_iterations)->capture_default_str();
  fit->add_option("--tolerance", fa.opt.tolerance)->capture_default_str();
  fit->add_option("--quantile", fa.quantile, "auto threshold quantile")->capture_default_str();
  fit->add_option("--seed", fa.opt.seed)->capture_default_str();
  fit->add_option("--in", fa.in, "vector pool")->required();
  fit->add_option("--out", fa.out, "model file")->required();
  fit->callback([&] { action = [&] { run_ood_fit(fa); }; });

  FilterArgs fl;
  auto* filter = ood->add_subcommand("filter", "Score candidates and accept typical ones");
  filter->add_option("--gmm", fl.gmm)->required();
  filter->add_option("--tau", fl.tau, "threshold in [0,1] or 'auto' (stored quantile)")->capture_default_str();
  filter->add_option("--in", fl.in, "CSV whose first column holds ids")->required();
  filter->add_option("--pool", fl.pool, "vector pool holding the candidates")->required();
  filter->add_option("--out", fl.out, "CSV id,typicality,accepted")->required();
  filter->callback([&] { action = [&] { run_ood_filter(fl); }; });

  FuseArgs fu;
  auto* fuse = app.add_subcommand("fuse", "Consensus fusion of per-model VOC annotations");
  fuse->add_option("--models", fu.models, "one directory per model")->required();
  fuse->add_option("--variant", fu.variant, "standard | soft | diou | weighted | cluster | adaptive")
      ->capture_default_str();
  fuse->add_option("--tau-iou", fu.cfg.tau_iou, "clustering IoU")->capture_default_str();
  fuse->add_option("--tau-nms", fu.cfg.tau_nms, "suppression IoU")->capture_default_str();
  fuse->add_option("--sigma", fu.cfg.sigma, "Soft-NMS gaussian width")->capture_default_str();
  fuse->add_option("--score-floor", fu.cfg.score_floor)->capture_default_str();
  fuse->add_option("--threads", fu.threads, "0: hardware concurrency")->capture_default_str();
  fuse->add_option("--out", fu.out, "output directory")->required();
  fuse->callback([&] { action = [&] { run_fuse(fu); }; });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Detection metrics against ground truth");
  eval->add_option("--pred", ev.pred)->required();
  eval->add_option("--gt", ev.gt)->required();
  eval->add_option("--method", ev.method, "row label")->capture_default_str();
  eval->add_option("--vocabulary", ev.vocabulary, "prompt vocabulary for coverage");
  eval->add_option("--iou", ev.iou, "match threshold for P/R")->capture_default_str();
  eval->add_option("--out", ev.out)->required();
  eval->callback([&] { action = [&] { run_eval(ev); }; });

  auto* bench = app.add_subcommand("bench", "Scaling and learning-curve benchmarks")->require_subcommand(1);
  BenchArgs ba;
  for (const auto* mode : {"scaling", "curves"}) {
    auto* sub = bench->add_subcommand(mode, std::string(mode) == "scaling" ? "Selection cost vs N" : "AUC vs labels");
    sub->add_option("--config", ba.config, "JSON bench config")->required();
    sub->add_option("--out", ba.out)->required();
    const bool curves = std::string(mode) == "curves";
    sub->callback([&, curves] {
      action = [&, curves] {
        const auto cfg = load_bench_config(ba.config);
        if (curves) {
          write_curves_csv(ba.out, run_al_loop(cfg, &std::cerr));
        } else {
          write_scaling_csv(ba.out, run_scaling_bench(cfg, &std::cerr));
        }
      };
    });
  }

  std::string spec;
  auto* pipeline = app.add_subcommand("pipeline", "Run a declarative stage spec");
  pipeline->add_option("--spec", spec, "JSON pipeline spec")->required();
  pipeline->callback([&] {
    action = [&] {
      PipelineRunner runner(load_pipeline_spec(spec), &std::cerr);
      const auto m = runner.run();
      std::cout << m.entries.size() << " stages -> " << runner.manifest_path().string() << '\n';
    };
  });

  auto* synth = app.add_subcommand("synth", "Generate synthetic inputs")->require_subcommand(1);
  SynthPoolArgs sp;
  auto* spool = synth->add_subcommand("pool", "Two-class clustered Gaussian vectors");
  spool->add_option("--n", sp.n)->capture_default_str();
  spool->add_option("--d", sp.d)->capture_default_str();
  spool->add_option("--separation", sp.task.separation)->capture_default_str();
  spool->add_option("--clusters", sp.task.clusters_per_class)->capture_default_str();
  spool->add_option("--spread", sp.task.cluster_spread)->capture_default_str();
  spool->add_option("--noise", sp.task.label_noise, "label flip rate")->capture_default_str();
  spool->add_option("--seed", sp.seed)->capture_default_str();
  spool->add_option("--out", sp.out, "vector pool")->required();
  spool->add_option("--labels", sp.labels, "write a seed label CSV");
  spool->add_option("--seed-labels", sp.seed_labels, "seed label count")->capture_default_str();
  spool->add_option("--all-labels", sp.hidden, "write every pool label");
  spool->callback([&] { action = [&] { run_synth_pool(sp); }; });

  SynthDetArgs sd;
  auto* sdet = synth->add_subcommand("detections", "Per-model VOC proposals plus ground truth");
  sdet->add_option("--images", sd.cfg.images)->capture_default_str();
  sdet->add_option("--seed", sd.cfg.seed)->capture_default_str();
  sdet->add_option("--models", sd.cfg.models)->capture_default_str();
  sdet->add_option("--out", sd.out)->required();
  sdet->callback([&] { action = [&] { run_synth_detections(sd); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (action) action();
    return kOk;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const StageError& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kStage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return kStage;
  }
}
