#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "CLI11.hpp"
#include "multihop/gradcheck.hpp"
#include "multihop/harness.hpp"

using namespace multihop;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::string config;
  std::string dataset;
  std::optional<std::uint64_t> seed;
  std::optional<double> epochs_scale;
  std::optional<int> branches;
  std::string conv, fusion, affinity, distance, sigma;
  std::optional<int> threads;
  bool deterministic = false;
  bool early_stopping = false;
  bool no_history = false;
};

void add_overrides(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "pipeline config JSON");
  if (config_required) c->required();
  cmd->add_option("--dataset", o.dataset, "dataset directory (overrides the config)");
  cmd->add_option("--seed", o.seed, "training seed");
  cmd->add_option("--epochs-scale", o.epochs_scale, "multiplier on both phase lengths");
  cmd->add_option("--branches", o.branches, "number of hop branches");
  cmd->add_option("--conv", o.conv, "first-order | chebyshev");
  cmd->add_option("--fusion", o.fusion, "awc | sum | max");
  cmd->add_option("--affinity", o.affinity, "none | features | meta");
  cmd->add_option("--distance", o.distance, "correlation | l1");
  cmd->add_option("--sigma", o.sigma, "kernel width or 'auto'");
  cmd->add_option("--threads", o.threads, "worker pool width");
  cmd->add_flag("--deterministic", o.deterministic, "omit wall-clock fields");
  cmd->add_flag("--early-stopping", o.early_stopping, "enable early stopping on validation accuracy");
  cmd->add_flag("--no-history", o.no_history, "omit per-epoch history from reports");
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_pipeline_config(o.config);
  if (!o.dataset.empty()) {
    c.dataset_path = o.dataset;
    c.synthetic.reset();
  }
  if (o.seed) c.train.seed = *o.seed;
  if (o.epochs_scale) c.train.epochs_scale = *o.epochs_scale;
  if (o.branches) c.model.branches = *o.branches;
  if (!o.conv.empty()) c.model.conv = conv_from_string(o.conv);
  if (!o.fusion.empty()) c.model.fusion = fusion_from_string(o.fusion);
  if (!o.affinity.empty()) c.affinity = affinity_mode_from_string(o.affinity);
  if (!o.distance.empty()) c.affinity_cfg.distance = distance_from_string(o.distance);
  if (!o.sigma.empty()) {
    if (o.sigma == "auto") {
      c.affinity_cfg.sigma.reset();
    } else {
      c.affinity_cfg.sigma = std::stod(o.sigma);
    }
  }
  if (o.threads) c.threads = *o.threads;
  if (o.deterministic) c.train.deterministic = true;
  if (o.early_stopping && !c.train.early_stopping) c.train.early_stopping = EarlyStopping{};
  if (o.no_history) c.train.record_history = false;
  return c;
}

void emit_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

WeightedGraph random_graph(NodeId n, double p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Edge> edges;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (u(rng) < p) edges.push_back({i, j, 1.0 - u(rng)});
  return WeightedGraph::from_edges(n, std::move(edges));
}

std::vector<RunReport> reports_from_json(const nlohmann::json& j) {
  std::vector<RunReport> out;
  if (j.contains("runs")) {
    for (const auto& r : j.at("runs")) out.push_back(r.get<RunReport>());
  } else {
    out.push_back(j.get<RunReport>());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-hop graph convolution engine"};
  app.require_subcommand(1);

  Overrides train_o, runs_o, cv_o, export_o;
  std::string out = "-", csv;

  auto* train = app.add_subcommand("train", "train one model and emit a run report");
  add_overrides(train, train_o, true);
  train->add_option("--out", out, "report JSON path ('-' for stdout)");
  train->add_option("--csv", csv, "run table CSV path");

  auto* runs = app.add_subcommand("runs", "repeated runs ranked by validation accuracy");
  add_overrides(runs, runs_o, true);
  std::optional<int> n_runs, top_m;
  runs->add_option("--runs", n_runs, "number of seeds");
  runs->add_option("--top", top_m, "runs kept after ranking by validation accuracy");
  runs->add_option("--out", out, "aggregate report JSON path");
  runs->add_option("--csv", csv, "run table CSV path");

  auto* cv = app.add_subcommand("cv", "stratified k-fold cross validation");
  add_overrides(cv, cv_o, true);
  std::optional<int> folds;
  std::optional<std::uint64_t> cv_seed;
  std::string compare_cfg;
  cv->add_option("--folds", folds, "number of folds");
  cv->add_option("--cv-seed", cv_seed, "fold assignment seed");
  cv->add_option("--compare", compare_cfg, "second config for a paired t-test on the same folds");
  cv->add_option("--out", out, "report JSON path");
  cv->add_option("--csv", csv, "per-fold CSV path");

  auto* khop = app.add_subcommand("khop", "k-hop graph construction");
  khop->require_subcommand(1);
  auto* kbuild = khop->add_subcommand("build", "build the k-hop graph of an input graph");
  std::string kgraph, kdataset, kdot, kconfig;
  int kk = 2;
  std::string exact_distance = "on";
  double budget = 1e7;
  std::optional<int> kthreads;
  kbuild->add_option("--config", kconfig, "pipeline config (dataset and khop sections)");
  kbuild->add_option("--graph", kgraph, "graph JSON");
  kbuild->add_option("--dataset", kdataset, "dataset directory (its stored edges)");
  kbuild->add_option("--k", kk, "hop count")->check(CLI::PositiveNumber);
  kbuild->add_option("--exact-distance", exact_distance, "on: keep only pairs at hop distance k")
      ->check(CLI::IsMember({"on", "off"}));
  kbuild->add_option("--budget", budget, "DFS expansions per source");
  kbuild->add_option("--threads", kthreads, "worker threads");
  kbuild->add_option("--out", out, "graph JSON output");
  kbuild->add_option("--dot", kdot, "Graphviz output");

  auto* kcompare = khop->add_subcommand("compare", "check the builder against the brute-force oracle");
  int cmp_n = 200, cmp_max = 12;
  std::uint64_t cmp_seed = 0;
  std::vector<int> cmp_k{2, 3, 4};
  kcompare->add_option("--n", cmp_n, "random graphs")->check(CLI::PositiveNumber);
  kcompare->add_option("--max-nodes", cmp_max, "largest graph size")->check(CLI::Range(2, kOracleMaxNodes));
  kcompare->add_option("--seed", cmp_seed, "generator seed");
  kcompare->add_option("--k", cmp_k, "hop counts")->delimiter(',');
  kcompare->add_option("--out", out, "summary JSON");
  kcompare->add_flag("--oracle", "compare against the brute-force oracle (the only reference)");

  auto* aff = app.add_subcommand("affinity", "affinity graph construction");
  aff->require_subcommand(1);
  auto* abuild = aff->add_subcommand("build", "meta adjacency masked by feature similarity");
  std::string a_features, a_meta, a_betas, a_distance = "correlation", a_sigma = "auto";
  abuild->add_option("--features", a_features, "features CSV (node_id,idx:val,...)")->required();
  abuild->add_option("--meta", a_meta, "meta measures CSV")->required();
  abuild->add_option("--betas", a_betas, "per-measure thresholds JSON")->required();
  abuild->add_option("--distance", a_distance, "correlation | l1");
  abuild->add_option("--sigma", a_sigma, "kernel width or 'auto'");
  abuild->add_option("--out", out, "graph JSON output");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  int gc_instances = 50;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  gc->add_option("--instances", gc_instances, "random instances");
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--tol", gc_tol, "max relative error");
  double gc_eps = 1e-5;
  std::vector<std::string> gc_layers{"all"};
  gc->add_option("--eps", gc_eps, "finite-difference step")->check(CLI::PositiveNumber);
  gc->add_option("--layers", gc_layers, "all, or a comma list of conv,chebyshev,awc,elu,loss,model")
      ->delimiter(',');
  gc->add_option("--out", out, "summary JSON");

  auto* exp = app.add_subcommand("export", "plot and visualization data");
  add_overrides(exp, export_o, false);
  std::string e_embed, e_dot, e_csv, e_report;
  int e_hop = 1;
  exp->add_option("--embeddings", e_embed, "train, then write N x C logits CSV");
  exp->add_option("--graph-dot", e_dot, "write the weighted hop graph as Graphviz");
  exp->add_option("--hop", e_hop, "hop graph for --graph-dot")->check(CLI::PositiveNumber);
  exp->add_option("--report-csv", e_csv, "write the run table of --report as CSV");
  exp->add_option("--report", e_report, "run, runs or cv report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (train->parsed()) {
      const auto cfg = resolve(train_o);
      const auto data = prepare(cfg);
      const auto rep = train_one(data, cfg.model, cfg.train);
      emit_json(out, rep);
      if (!csv.empty()) write_text(csv, runs_csv(std::span<const RunReport>(&rep, 1)));
      std::fprintf(stderr, "%s seed %llu: val %.4f test %.4f (%s)\n", data.name.c_str(),
                   static_cast<unsigned long long>(rep.seed), rep.val_acc, rep.test_acc, rep.status.c_str());
      return rep.status == "ok" ? 0 : kExitRuntime;
    }
    if (runs->parsed()) {
      auto cfg = resolve(runs_o);
      if (n_runs) cfg.runs = *n_runs;
      if (top_m) cfg.top = *top_m;
      const auto data = prepare(cfg);
      const auto agg = repeated_runs(data, cfg.model, cfg.train, cfg.runs, cfg.top, cfg.threads);
      emit_json(out, agg);
      if (!csv.empty()) write_text(csv, runs_csv(agg.runs));
      std::fprintf(stderr, "%s: %s: test %.4f +- %.4f\n", data.name.c_str(), agg.protocol.c_str(),
                   agg.test.mean, agg.test.std);
      return 0;
    }
    if (cv->parsed()) {
      auto cfg = resolve(cv_o);
      if (folds) cfg.folds = *folds;
      if (cv_seed) cfg.cv_seed = *cv_seed;
      const auto data = prepare(cfg);
      const auto a = cross_validate(data, cfg.model, cfg.train, cfg.folds, cfg.cv_seed, cfg.cv_val_fraction,
                                    cfg.threads);
      nlohmann::json j = a;
      if (!compare_cfg.empty()) {
        Overrides other = cv_o;
        other.config = compare_cfg;
        auto cfg_b = resolve(other);
        cfg_b.folds = cfg.folds;
        cfg_b.cv_seed = cfg.cv_seed;
        const auto data_b = prepare(cfg_b);
        if (data_b.labels != data.labels) throw std::invalid_argument("--compare config uses different labels");
        const auto b = cross_validate(data_b, cfg_b.model, cfg_b.train, cfg.folds, cfg.cv_seed,
                                      cfg_b.cv_val_fraction, cfg_b.threads);
        j = {{"schema_version", kReportSchemaVersion},
             {"kind", "cv-compare"},
             {"a", a},
             {"b", b},
             {"ttest", paired_ttest(a.accuracies, b.accuracies)}};
      }
      emit_json(out, j);
      if (!csv.empty()) write_text(csv, runs_csv(a.runs));
      std::fprintf(stderr, "%s: %d-fold test %.4f +- %.4f\n", data.name.c_str(), a.folds, a.test.mean, a.test.std);
      return 0;
    }
    if (kbuild->parsed()) {
      KhopOptions opts;
      std::optional<WeightedGraph> g;
      if (!kconfig.empty()) {
        const auto cfg = load_pipeline_config(kconfig);
        opts = cfg.khop;
        const auto ds = load_pipeline_dataset(cfg);
        if (!ds.graph) throw std::invalid_argument("dataset has no stored graph");
        g = *ds.graph;
      }
      if (!kgraph.empty()) g = load_graph_json(kgraph);
      if (!kdataset.empty()) {
        auto ds = load_dataset(kdataset);
        if (!ds.graph) throw std::invalid_argument(kdataset + " has no edges.tsv");
        g = std::move(*ds.graph);
      }
      if (!g) throw std::invalid_argument("khop build needs --graph, --dataset or --config");
      if (kbuild->count("--exact-distance")) opts.exact_distance = exact_distance == "on";
      if (kbuild->count("--budget")) opts.expansion_budget = static_cast<std::uint64_t>(budget);
      if (kthreads) opts.threads = *kthreads;
      const auto t0 = std::chrono::steady_clock::now();
      const auto hk = build_khop(*g, kk, opts);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "k=%d: %zu -> %zu edges in %.2f s\n", kk, g->num_edges(), hk.num_edges(), secs);
      if (!out.empty()) write_text(out, to_json(hk) + "\n");
      if (!kdot.empty()) write_text(kdot, to_dot(hk));
      return 0;
    }
    if (kcompare->parsed()) {
      Rng rng(cmp_seed);
      std::uniform_int_distribution<int> size(2, cmp_max);
      std::uniform_real_distribution<double> prob(0.2, 0.6);
      int mismatches = 0, checks = 0;
      nlohmann::json failures = nlohmann::json::array();
      for (int i = 0; i < cmp_n; ++i) {
        const NodeId n = size(rng);
        const double p = prob(rng);
        const auto g = random_graph(n, p, rng);
        ++checks;
        if (!(build_khop(g, 1) == g)) {
          ++mismatches;
          failures.push_back({{"graph", i}, {"k", 1}});
        }
        for (int k : cmp_k) {
          for (bool exact : {true, false}) {
            ++checks;
            KhopOptions opts;
            opts.exact_distance = exact;
            if (!(build_khop(g, k, opts) == khop_oracle(g, k, exact))) {
              ++mismatches;
              failures.push_back({{"graph", i}, {"k", k}, {"exact_distance", exact}, {"n", n}});
            }
          }
        }
      }
      emit_json(out, {{"graphs", cmp_n}, {"checks", checks}, {"mismatches", mismatches}, {"failures", failures}});
      return mismatches == 0 ? 0 : kExitCheckFailed;
    }
    if (abuild->parsed()) {
      const auto meta = load_meta_table(a_meta, a_betas);
      const auto features = load_features_csv(a_features, meta.n);
      AffinityConfig acfg;
      acfg.distance = distance_from_string(a_distance);
      if (a_sigma != "auto") acfg.sigma = std::stod(a_sigma);
      const auto adjacency = meta_adjacency(meta);
      const auto w = feature_edge_weights(features, adjacency, acfg);
      const auto e = build_affinity(adjacency, w.graph);
      std::fprintf(stderr, "%zu edges, sigma %.6g\n", e.num_edges(), w.sigma);
      write_text(out, to_json(e) + "\n");
      return 0;
    }
    if (gc->parsed()) {
      std::set<std::string> keep;
      for (const auto& l : gc_layers) {
        if (l == "all") {
          keep.insert(kGradcheckLayers.begin(), kGradcheckLayers.end());
        } else if (std::find(kGradcheckLayers.begin(), kGradcheckLayers.end(), l) != kGradcheckLayers.end()) {
          keep.insert(l);
        } else {
          throw std::invalid_argument("unknown layer '" + l + "'");
        }
      }
      auto suite = run_gradcheck_suite(gc_instances, gc_seed, gc_eps);
      std::erase_if(suite.cases, [&](const GradcheckCase& c) { return !keep.count(c.layer); });
      std::map<std::string, double> worst;
      for (const auto& c : suite.cases) worst[c.name] = std::max(worst[c.name], c.max_rel_error);
      emit_json(out, {{"instances", gc_instances},
                      {"eps", gc_eps},
                      {"layers", keep},
                      {"cases", suite.cases.size()},
                      {"tolerance", gc_tol},
                      {"worst", suite.worst()},
                      {"by_case", worst},
                      {"passed", suite.passed(gc_tol)}});
      return suite.passed(gc_tol) ? 0 : kExitCheckFailed;
    }
    if (exp->parsed()) {
      if (e_embed.empty() && e_dot.empty() && e_csv.empty()) {
        throw std::invalid_argument("export needs --embeddings, --graph-dot or --report-csv");
      }
      if (!e_csv.empty()) {
        if (e_report.empty()) throw std::invalid_argument("--report-csv needs --report");
        std::ifstream in(e_report);
        if (!in) throw std::runtime_error("cannot read " + e_report);
        nlohmann::json j;
        in >> j;
        if (j.contains("a")) j = j.at("a");
        write_text(e_csv, runs_csv(reports_from_json(j)));
      }
      if (!e_embed.empty() || !e_dot.empty()) {
        if (export_o.config.empty() && export_o.dataset.empty()) {
          throw std::invalid_argument("--embeddings and --graph-dot need --config or --dataset");
        }
        const auto cfg = resolve(export_o);
        const auto ds = load_pipeline_dataset(cfg);
        if (!e_dot.empty()) {
          PipelineConfig gcfg = cfg;
          gcfg.model.branches = 1;
          const auto data = prepare(ds, gcfg);
          write_text(e_dot, to_dot(build_khop(data.base, e_hop, cfg.khop)));
        }
        if (!e_embed.empty()) {
          const auto data = prepare(ds, cfg);
          auto trained = train_model(data, cfg.model, cfg.train);
          Rng rng(cfg.train.seed);
          const auto fr = trained.model.forward(data.features, false, rng);
          std::string text = "node_id,label";
          for (Eigen::Index c = 0; c < fr.logits.cols(); ++c) text += ",c" + std::to_string(c);
          text += '\n';
          char buf[32];
          for (Eigen::Index v = 0; v < fr.logits.rows(); ++v) {
            text += std::to_string(v) + "," + std::to_string(data.labels[v]);
            for (Eigen::Index c = 0; c < fr.logits.cols(); ++c) {
              std::snprintf(buf, sizeof buf, ",%.8g", static_cast<double>(fr.logits(v, c)));
              text += buf;
            }
            text += '\n';
          }
          write_text(e_embed, text);
        }
      }
      return 0;
    }
  } catch (const std::invalid_argument& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
