// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any selected criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "helpers.hpp"
#include "multihop/gradcheck.hpp"
#include "multihop/harness.hpp"
#include "properties.hpp"

using namespace multihop;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr int kOracleGraphs = 200;
constexpr double kOracleSeconds = 30.0;
constexpr int kGradInstances = 50;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kCoraMin = 0.800;
constexpr double kCoraMinutes = 60.0;
constexpr double kCiteseerMin = 0.690;
constexpr double kPubmedMin = 0.770;
constexpr double kPubmedKhopSeconds = 600.0;
constexpr double kGcnTolerance = 1e-10;
constexpr double kBranchGain = 0.05;
constexpr double kSignificance = 0.05;
constexpr int kPropertyCases = 1000;
constexpr double kPropertySeconds = 120.0;

struct Outcome {
  bool pass = false;
  std::string detail;
  nlohmann::json data = nlohmann::json::object();
};

struct Context {
  fs::path source_dir;
  fs::path out_dir;
  std::string cli;
  std::uint64_t seed = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<WeightedGraph> oracle_graphs(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(2, 12);
  std::uniform_real_distribution<double> prob(0.2, 0.6);
  std::vector<WeightedGraph> out;
  for (int i = 0; i < kOracleGraphs; ++i) {
    const int n = size(rng);
    out.push_back(testing::random_graph(n, prob(rng), rng));
  }
  return out;
}

Outcome khop_oracle_equivalence(const Context& ctx) {
  const auto graphs = oracle_graphs(ctx.seed);
  const auto t0 = std::chrono::steady_clock::now();
  int checks = 0, mismatches = 0;
  std::string first;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    for (int k = 2; k <= 4; ++k) {
      for (bool exact : {true, false}) {
        KhopOptions opts;
        opts.exact_distance = exact;
        const auto built = build_khop(graphs[i], k, opts);
        const bool ok = testing::bitwise_equal(built, khop_oracle(graphs[i], k, exact)) &&
                        testing::bitwise_equal(built, testing::enumerate_paths(graphs[i], k, exact));
        ++checks;
        if (!ok && mismatches++ == 0) first = fmt("graph %zu k=%d exact=%d", i, k, exact ? 1 : 0);
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mismatches == 0 && secs < kOracleSeconds;
  o.detail = fmt("%d comparisons over %d graphs, %d mismatches, %.2f s (limit %.0f s)", checks, kOracleGraphs,
                 mismatches, secs, kOracleSeconds);
  if (!first.empty()) o.detail += "; first: " + first;
  o.data = {{"checks", checks}, {"mismatches", mismatches}, {"seconds", secs}};
  return o;
}

Outcome khop_identity(const Context& ctx) {
  const auto graphs = oracle_graphs(ctx.seed);
  int bad = 0;
  for (const auto& g : graphs)
    if (!testing::bitwise_equal(build_khop(g, 1), g)) ++bad;
  Outcome o;
  o.pass = bad == 0;
  o.detail = fmt("build_khop(g, 1) differs from g on %d of %d graphs", bad, kOracleGraphs);
  o.data = {{"graphs", kOracleGraphs}, {"differing", bad}};
  return o;
}

Outcome gradient_suite(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = run_gradcheck_suite(kGradInstances, ctx.seed);
  const double secs = seconds_since(t0);
  std::map<std::string, double> worst;
  for (const auto& c : suite.cases) worst[c.layer] = std::max(worst[c.layer], c.max_rel_error);
  bool covered = true;
  for (const auto& l : kGradcheckLayers) covered = covered && worst.count(l);
  Outcome o;
  o.pass = covered && suite.passed(kGradTolerance) && secs < kGradSeconds;
  o.detail = fmt("%zu checks over %d instances, worst relative error %.3g (limit %.0e), %.2f s (limit %.0f s)",
                 suite.cases.size(), kGradInstances, suite.worst(), kGradTolerance, secs, kGradSeconds);
  o.data = {{"cases", suite.cases.size()}, {"worst", worst}, {"seconds", secs}};
  return o;
}

void save(const Context& ctx, const std::string& name, const nlohmann::json& j) {
  if (ctx.out_dir.empty()) return;
  fs::create_directories(ctx.out_dir);
  write_text((ctx.out_dir / name).string(), j.dump(2) + "\n");
}

struct DeskResult {
  AggregateReport report;
  double seconds = 0;
  PreparedData data;
};

DeskResult desk(const Context& ctx, const std::string& config_name) {
  const auto cfg = load_pipeline_config((ctx.source_dir / "configs" / config_name).string());
  const auto t0 = std::chrono::steady_clock::now();
  DeskResult r;
  r.data = prepare(cfg);
  r.report = repeated_runs(r.data, cfg.model, cfg.train, cfg.runs, cfg.top, cfg.threads);
  r.report.protocol = fmt("desk: %d runs, top %d by validation", cfg.runs, cfg.top);
  r.seconds = seconds_since(t0);
  nlohmann::json j = r.report;
  j["provenance"] = r.data.provenance;
  j["seconds"] = r.seconds;
  save(ctx, fs::path(config_name).stem().string() + "_runs.json", j);
  return r;
}

std::string desk_detail(const DeskResult& r, double min) {
  return fmt("mean test accuracy of top %d of %d runs %.4f +- %.4f (all runs %.4f), required >= %.3f; %.1f min",
             r.report.top_m, r.report.n_runs, r.report.test.mean, r.report.test.std, r.report.test_all.mean, min,
             r.seconds / 60.0);
}

nlohmann::json desk_data(const DeskResult& r) {
  return {{"mean", r.report.test.mean}, {"std", r.report.test.std}, {"mean_all", r.report.test_all.mean},
          {"seconds", r.seconds}, {"split", r.data.provenance.value("split", nlohmann::json())}};
}

Outcome cora(const Context& ctx) {
  const auto r = desk(ctx, "cora.json");
  Outcome o;
  o.pass = r.report.test.mean >= kCoraMin && r.seconds <= kCoraMinutes * 60.0;
  o.detail = desk_detail(r, kCoraMin) + fmt(" (limit %.0f min)", kCoraMinutes);
  o.data = desk_data(r);
  return o;
}

Outcome citeseer(const Context& ctx) {
  const auto r = desk(ctx, "citeseer.json");
  Outcome o;
  o.pass = r.report.test.mean >= kCiteseerMin;
  o.detail = desk_detail(r, kCiteseerMin);
  o.data = desk_data(r);
  return o;
}

Outcome pubmed(const Context& ctx) {
  const auto cfg = load_pipeline_config((ctx.source_dir / "configs" / "pubmed.json").string());
  const auto ds = load_pipeline_dataset(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  bool khop_ok = true;
  std::string khop_error;
  std::size_t khop_edges = 0;
  try {
    khop_edges = build_khop(*ds.graph, 2, cfg.khop).num_edges();
  } catch (const std::exception& ex) {
    khop_ok = false;
    khop_error = ex.what();
  }
  const double khop_secs = seconds_since(t0);
  khop_ok = khop_ok && khop_secs < kPubmedKhopSeconds;

  const auto r = desk(ctx, "pubmed.json");
  Outcome o;
  o.pass = khop_ok && r.report.test.mean >= kPubmedMin;
  o.detail = desk_detail(r, kPubmedMin) +
             fmt("; k=2 graph %zu edges in %.2f s (limit %.0f s)", khop_edges, khop_secs, kPubmedKhopSeconds);
  if (!khop_error.empty()) o.detail += "; k-hop error: " + khop_error;
  o.data = desk_data(r);
  o.data["khop_seconds"] = khop_secs;
  o.data["khop_edges"] = khop_edges;
  return o;
}

double gcn_gap(const WeightedGraph& g, const Eigen::MatrixXd& x, int hidden, int classes, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.branches = 1;
  cfg.layer_widths = {hidden, classes};
  Rng rng(seed);
  const auto model = MultiHopModel<double>::build(cfg, build_hop_set(g, 1), static_cast<int>(x.cols()), rng);
  const SparseMatrix<double> xs = x.sparseView();
  const Eigen::MatrixXd ours = model.forward(xs, false, rng).logits;
  const auto& layers = model.branches()[0].layers;
  const Eigen::MatrixXd ref = testing::reference_gcn(g, x, layers[0][0].value, layers[1][0].value);
  return (ours - ref).cwiseAbs().maxCoeff();
}

Outcome vanilla_gcn(const Context& ctx) {
  std::mt19937_64 rng(ctx.seed);
  std::uniform_int_distribution<int> nodes(5, 60), dims(2, 20), hid(2, 16), cls(2, 7);
  std::uniform_real_distribution<double> prob(0.05, 0.5);
  double worst = 0.0;
  int cases = 0;
  for (int i = 0; i < 20; ++i, ++cases) {
    const auto g = testing::random_graph(nodes(rng), prob(rng), rng);
    const Eigen::MatrixXd x = testing::gaussian(g.n(), dims(rng), rng);
    worst = std::max(worst, gcn_gap(g, x, hid(rng), cls(rng), rng()));
  }
  std::string real;
  const auto cora_dir = ctx.source_dir / "data" / "cora";
  if (fs::exists(cora_dir / "meta.json")) {
    const auto ds = load_dataset(cora_dir.string());
    const Eigen::MatrixXd x(row_normalize(ds.features));
    worst = std::max(worst, gcn_gap(*ds.graph, x, 16, ds.classes, ctx.seed));
    ++cases;
    real = " including the Cora graph";
  }
  Outcome o;
  o.pass = worst < kGcnTolerance;
  o.detail = fmt("max |logit difference| %.3g over %d graphs%s (limit %.0e)", worst, cases, real.c_str(),
                 kGcnTolerance);
  o.data = {{"worst", worst}, {"cases", cases}};
  return o;
}

Outcome awc_ablation(const Context& ctx) {
  auto cfg = load_pipeline_config((ctx.source_dir / "configs" / "synth_twohop.json").string());
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = load_pipeline_dataset(cfg);
  std::map<std::string, CvReport> runs;
  auto run = [&](const std::string& key, int branches, Fusion fusion) {
    auto c = cfg;
    c.model.branches = branches;
    c.model.fusion = fusion;
    const auto data = prepare(ds, c);
    runs.emplace(key, cross_validate(data, c.model, c.train, cfg.folds, cfg.cv_seed, cfg.cv_val_fraction, cfg.threads));
  };
  run("awc", 2, Fusion::awc);
  run("sum", 2, Fusion::sum);
  run("max", 2, Fusion::max);
  run("one", 1, Fusion::awc);
  const double awc = runs["awc"].test.mean, sum = runs["sum"].test.mean, mx = runs["max"].test.mean,
               one = runs["one"].test.mean;
  const auto t = paired_ttest(runs["awc"].accuracies, runs["one"].accuracies);
  const bool fusion_ok = awc >= sum && awc >= mx;
  const bool gain_ok = awc - one >= kBranchGain;
  const bool p_ok = t.p < kSignificance;
  Outcome o;
  o.pass = fusion_ok && gain_ok && p_ok;
  o.detail = fmt("%d-fold means: awc %.4f, sum %.4f, max %.4f [awc >= sum, max: %s]; 1-branch %.4f, gain %.4f "
                 "[>= %.2f: %s]; paired t p = %.3g [< %.2f: %s]; %.1f s",
                 cfg.folds, awc, sum, mx, fusion_ok ? "yes" : "no", one, awc - one, kBranchGain,
                 gain_ok ? "yes" : "no", t.p, kSignificance, p_ok ? "yes" : "no", seconds_since(t0));
  o.data = {{"awc", runs["awc"].accuracies}, {"sum", runs["sum"].accuracies}, {"max", runs["max"].accuracies},
            {"one_branch", runs["one"].accuracies}, {"ttest", t}};
  save(ctx, "synth_twohop_ablation.json", o.data);
  return o;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const Context& ctx) {
  if (ctx.cli.empty()) return {false, "no --cli binary given"};
  const fs::path dir = ctx.out_dir.empty() ? fs::temp_directory_path() : ctx.out_dir;
  fs::create_directories(dir);
  struct Job {
    std::string config;
    std::string extra;
  };
  const std::vector<Job> jobs{{"synth_twohop.json", "--seed 3 --epochs-scale 0.1"},
                              {"cora.json", "--seed 1 --epochs-scale 0.05"}};
  int identical = 0, total = 0;
  std::string why;
  for (const auto& job : jobs) {
    for (const bool det : {true, false}) {
      std::vector<std::string> texts;
      for (int rep = 0; rep < 2; ++rep) {
        const auto out = dir / fmt("determinism_%d_%d_%d.json", total, det ? 1 : 0, rep);
        const std::string cmd = "\"" + ctx.cli + "\" train --config \"" +
                                (ctx.source_dir / "configs" / job.config).string() + "\" " + job.extra +
                                (det ? " --deterministic" : "") + " --out \"" + out.string() + "\" 2>/dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "train failed: " + cmd};
        texts.push_back(read_file(out));
      }
      bool same;
      if (det) {
        same = texts[0] == texts[1];
      } else {
        auto a = nlohmann::json::parse(texts[0]), b = nlohmann::json::parse(texts[1]);
        a.erase("wall_s");
        b.erase("wall_s");
        same = a == b;
      }
      ++total;
      if (same) {
        ++identical;
      } else if (why.empty()) {
        why = job.config + (det ? " (deterministic bytes)" : " (metrics)");
      }
    }
  }
  Outcome o;
  o.pass = identical == total;
  o.detail = fmt("%d of %d repeated train invocations identical (byte-level with --deterministic, "
                 "all fields but wall_s otherwise)", identical, total);
  if (!why.empty()) o.detail += "; differs: " + why;
  return o;
}

Outcome properties(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = testing::run_properties(ctx.seed);
  const double secs = seconds_since(t0);
  int cases = 0, failed = 0;
  std::string first;
  for (const auto& r : results) {
    cases += r.cases;
    failed += r.failures;
    if (r.failures && first.empty()) first = r.name + ": " + r.first_failure;
  }
  Outcome o;
  o.pass = failed == 0 && cases >= kPropertyCases && secs < kPropertySeconds;
  o.detail = fmt("%zu properties, %d generated cases (minimum %d), %d failed, %.2f s (limit %.0f s)",
                 results.size(), cases, kPropertyCases, failed, secs, kPropertySeconds);
  if (!first.empty()) o.detail += "; " + first;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected;
  Context ctx;
  std::string source = MULTIHOP_SOURCE_DIR, out_dir, report;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--source-dir", source, "repository root (configs/, data/)");
  app.add_option("--out-dir", out_dir, "directory for run reports");
  app.add_option("--cli", ctx.cli, "multihop executable (criterion 9)");
  app.add_option("--seed", ctx.seed, "generator seed");
  app.add_option("--report", report, "write all outcomes as JSON");
  CLI11_PARSE(app, argc, argv);
  ctx.source_dir = source;
  if (!out_dir.empty()) ctx.out_dir = out_dir;

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
      {"k-hop oracle equivalence", khop_oracle_equivalence},
      {"k=1 identity", khop_identity},
      {"gradient suite", gradient_suite},
      {"Cora desk protocol", cora},
      {"Citeseer desk protocol", citeseer},
      {"Pubmed desk protocol and k-hop cost", pubmed},
      {"vanilla GCN equivalence", vanilla_gcn},
      {"fusion and branch ablation", awc_ablation},
      {"determinism", determinism},
      {"invariant properties", properties},
  };
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.push_back(i);

  bool all = true;
  nlohmann::json out = nlohmann::json::array();
  for (int id : selected) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(id - 1)];
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& ex) {
      o = {false, std::string("error: ") + ex.what()};
    }
    all = all && o.pass;
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    out.push_back({{"criterion", id}, {"name", name}, {"pass", o.pass}, {"detail", o.detail}, {"data", o.data}});
  }
  if (!report.empty()) write_text(report, out.dump(2) + "\n");
  return all ? 0 : 1;
}
