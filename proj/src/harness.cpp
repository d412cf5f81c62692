#include "multihop/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "multihop/parallel.hpp"

namespace multihop {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int scaled(int epochs, double scale) {
  return static_cast<int>(std::llround(static_cast<double>(epochs) * scale));
}

/// Calls fn(i) for i in [0, count) on up to `threads` workers; the first
/// exception is rethrown after all workers stop.
template <class Fn>
void run_pool(std::size_t count, int threads, Fn fn) {
  const auto width = std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), count);
  if (width <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < width; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void TrainConfig::validate() const {
  if (phase1.epochs < 0 || phase2.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (phase1.epochs > 0 && !(phase1.lr > 0)) throw std::invalid_argument("phase1 lr must be positive");
  if (phase2.epochs > 0 && !(phase2.lr > 0)) throw std::invalid_argument("phase2 lr must be positive");
  if (!(epochs_scale >= 0)) throw std::invalid_argument("epochs_scale must be >= 0");
  if (early_stopping && early_stopping->patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (early_stopping && early_stopping->min_epochs < 0) throw std::invalid_argument("min_epochs must be >= 0");
}

int TrainConfig::phase1_epochs() const { return scaled(phase1.epochs, epochs_scale); }
int TrainConfig::phase2_epochs() const { return scaled(phase2.epochs, epochs_scale); }

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"phase1", {{"epochs", c.phase1.epochs}, {"lr", c.phase1.lr}}},
       {"phase2", {{"epochs", c.phase2.epochs}, {"lr", c.phase2.lr}}},
       {"early_stopping", nullptr},
       {"seed", c.seed},
       {"epochs_scale", c.epochs_scale},
       {"record_history", c.record_history},
       {"deterministic", c.deterministic}};
  if (c.early_stopping) {
    j["early_stopping"] = {{"patience", c.early_stopping->patience},
                           {"min_epochs", c.early_stopping->min_epochs}};
  }
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto phase = [&](const char* key, Phase& p) {
    if (!j.contains(key)) return;
    p.epochs = j.at(key).value("epochs", p.epochs);
    p.lr = j.at(key).value("lr", p.lr);
  };
  phase("phase1", c.phase1);
  phase("phase2", c.phase2);
  if (j.contains("early_stopping")) {
    const auto& es = j.at("early_stopping");
    if (es.is_null() || (es.is_boolean() && !es.get<bool>())) {
      c.early_stopping.reset();
    } else {
      EarlyStopping e;
      if (es.is_object()) {
        e.patience = es.value("patience", e.patience);
        e.min_epochs = es.value("min_epochs", e.min_epochs);
      }
      c.early_stopping = e;
    }
  }
  c.seed = j.value("seed", c.seed);
  c.epochs_scale = j.value("epochs_scale", c.epochs_scale);
  c.record_history = j.value("record_history", c.record_history);
  c.deterministic = j.value("deterministic", c.deterministic);
}

std::string to_string(AffinityMode m) {
  switch (m) {
    case AffinityMode::none: return "none";
    case AffinityMode::features: return "features";
    case AffinityMode::meta: return "meta";
  }
  return "none";
}

AffinityMode affinity_mode_from_string(const std::string& s) {
  if (s == "none") return AffinityMode::none;
  if (s == "features") return AffinityMode::features;
  if (s == "meta") return AffinityMode::meta;
  throw std::invalid_argument("unknown affinity mode '" + s + "' (expected none, features or meta)");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  if (c.synthetic) {
    j["dataset"] = {{"synthetic", c.synthetic->kind},
                    {"n", c.synthetic->n},
                    {"classes", c.synthetic->classes},
                    {"feature_dim", c.synthetic->feature_dim},
                    {"seed", c.synthetic->seed}};
  } else {
    j["dataset"] = c.dataset_path;
  }
  j["split"] = {{"kind", c.split}, {"seed", c.split_seed}};
  j["features"] = {{"row_normalize", c.row_normalize}};
  j["affinity"] = {{"mode", c.affinity ? nlohmann::json(to_string(*c.affinity)) : nlohmann::json("auto")},
                   {"distance", to_string(c.affinity_cfg.distance)},
                   {"sigma", c.affinity_cfg.sigma ? nlohmann::json(*c.affinity_cfg.sigma) : nlohmann::json("auto")}};
  j["khop"] = {{"exact_distance", c.khop.exact_distance}, {"expansion_budget", c.khop.expansion_budget}};
  j["model"] = c.model;
  j["train"] = c.train;
  j["runs"] = {{"n", c.runs}, {"top", c.top}};
  j["cv"] = {{"folds", c.folds}, {"seed", c.cv_seed}, {"val_fraction", c.cv_val_fraction}};
  j["threads"] = c.threads;
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.is_string()) {
      c.dataset_path = d.get<std::string>();
      c.synthetic.reset();
    } else {
      SyntheticSpec s;
      if (d.contains("path")) {
        c.dataset_path = d.at("path").get<std::string>();
      } else {
        s.kind = d.at("synthetic").get<std::string>();
        if (s.kind != "twohop" && s.kind != "tabular") {
          throw std::invalid_argument("unknown synthetic dataset '" + s.kind + "'");
        }
        s.n = d.value("n", s.n);
        s.classes = d.value("classes", s.classes);
        s.feature_dim = d.value("feature_dim", s.feature_dim);
        s.seed = d.value("seed", s.seed);
        c.synthetic = s;
      }
    }
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    if (s.is_string()) {
      c.split = s.get<std::string>();
    } else {
      c.split = s.value("kind", c.split);
      c.split_seed = s.value("seed", c.split_seed);
    }
  }
  if (j.contains("features")) c.row_normalize = j.at("features").value("row_normalize", c.row_normalize);
  if (j.contains("affinity")) {
    const auto& a = j.at("affinity");
    const auto mode = a.value("mode", std::string("auto"));
    if (mode == "auto") {
      c.affinity.reset();
    } else {
      c.affinity = affinity_mode_from_string(mode);
    }
    if (a.contains("distance")) c.affinity_cfg.distance = distance_from_string(a.at("distance").get<std::string>());
    if (a.contains("sigma")) {
      const auto& s = a.at("sigma");
      if (s.is_number()) {
        c.affinity_cfg.sigma = s.get<double>();
      } else if (s.is_null() || s == "auto") {
        c.affinity_cfg.sigma.reset();
      } else {
        throw std::invalid_argument("affinity.sigma must be a number or \"auto\"");
      }
    }
  }
  if (j.contains("khop")) {
    const auto& k = j.at("khop");
    c.khop.exact_distance = k.value("exact_distance", c.khop.exact_distance);
    if (k.contains("expansion_budget")) {
      c.khop.expansion_budget = static_cast<std::uint64_t>(k.at("expansion_budget").get<double>());
    }
  }
  if (j.contains("model")) {
    ModelConfig m = c.model;
    from_json(j.at("model"), m);
    c.model = m;
  }
  if (j.contains("train")) {
    TrainConfig t = c.train;
    from_json(j.at("train"), t);
    c.train = t;
  }
  if (j.contains("runs")) {
    c.runs = j.at("runs").value("n", c.runs);
    c.top = j.at("runs").value("top", c.top);
  }
  if (j.contains("cv")) {
    const auto& cv = j.at("cv");
    c.folds = cv.value("folds", c.folds);
    c.cv_seed = cv.value("seed", c.cv_seed);
    c.cv_val_fraction = cv.value("val_fraction", c.cv_val_fraction);
  }
  c.threads = j.value("threads", c.threads);
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw std::runtime_error(path + ": " + ex.what());
  }
  PipelineConfig c;
  try {
    from_json(j, c);
  } catch (const nlohmann::json::exception& ex) {
    throw std::runtime_error(path + ": " + ex.what());
  }
  // Dataset paths are relative to the config file.
  if (!c.dataset_path.empty()) {
    std::filesystem::path p(c.dataset_path);
    if (p.is_relative()) {
      const auto base = std::filesystem::path(path).parent_path();
      c.dataset_path = (base / p).lexically_normal().string();
    }
  }
  return c;
}

Dataset load_pipeline_dataset(const PipelineConfig& cfg) {
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    if (s.kind == "twohop") return synth_twohop(s.n, s.classes, s.seed);
    return synth_tabular(s.n, s.classes, s.feature_dim, s.seed);
  }
  if (cfg.dataset_path.empty()) throw std::invalid_argument("config names no dataset");
  return load_dataset(cfg.dataset_path);
}

PreparedData prepare(const Dataset& source, const PipelineConfig& cfg) {
  cfg.model.validate(source.classes);
  Dataset ds = source;
  std::string split_kind = cfg.split;
  if (split_kind == "auto") split_kind = ds.splits.empty() ? "planetoid" : "file";
  if (split_kind == "planetoid") {
    ds = planetoid_split(std::move(ds), cfg.split_seed);
  } else if (split_kind == "random") {
    ds.splits = random_split(ds.labels, 0.6, 0.2, cfg.split_seed);
    ds.info["split"] = "stratified random 60/20/20 (seed " + std::to_string(cfg.split_seed) + ")";
    ds.validate();
  } else if (split_kind == "file") {
    if (ds.splits.empty()) throw std::invalid_argument(ds.name + ": split 'file' requested but none is stored");
  } else {
    throw std::invalid_argument("unknown split kind '" + split_kind + "'");
  }

  AffinityMode mode = cfg.affinity.value_or(ds.meta && !ds.graph ? AffinityMode::meta : AffinityMode::features);
  PreparedData out;
  out.name = ds.name;
  out.classes = ds.classes;
  out.labels = ds.labels;
  out.splits = ds.splits;

  auto& prov = out.provenance;
  prov["dataset"] = {{"name", ds.name},
                     {"hash", dataset_hash(ds)},
                     {"n", ds.n},
                     {"classes", ds.classes},
                     {"feature_dim", ds.feature_dim}};
  if (!ds.info.empty()) prov["dataset"]["info"] = ds.info;
  prov["split"] = {{"kind", split_kind},
                   {"train", ds.splits.train.size()},
                   {"val", ds.splits.val.size()},
                   {"test", ds.splits.test.size()}};
  prov["affinity"] = {{"mode", to_string(mode)}};

  switch (mode) {
    case AffinityMode::none:
      if (!ds.graph) throw std::invalid_argument(ds.name + ": affinity 'none' needs a stored graph");
      out.base = *ds.graph;
      break;
    case AffinityMode::features: {
      if (!ds.graph) throw std::invalid_argument(ds.name + ": affinity 'features' needs a stored graph");
      auto w = feature_edge_weights(ds.features, *ds.graph, cfg.affinity_cfg);
      out.base = std::move(w.graph);
      prov["affinity"]["distance"] = to_string(cfg.affinity_cfg.distance);
      prov["affinity"]["sigma"] = w.sigma;
      prov["affinity"]["sigma_auto"] = !cfg.affinity_cfg.sigma.has_value();
      break;
    }
    case AffinityMode::meta: {
      if (!ds.meta) throw std::invalid_argument(ds.name + ": affinity 'meta' needs a meta table");
      const auto adjacency = meta_adjacency(*ds.meta);
      auto w = feature_edge_weights(ds.features, adjacency, cfg.affinity_cfg);
      out.base = build_affinity(adjacency, w.graph);
      prov["affinity"]["distance"] = to_string(cfg.affinity_cfg.distance);
      prov["affinity"]["sigma"] = w.sigma;
      prov["affinity"]["sigma_auto"] = !cfg.affinity_cfg.sigma.has_value();
      break;
    }
  }

  const auto hops = build_hop_set(out.base, cfg.model.branches, cfg.khop);
  prov["khop"] = {{"exact_distance", cfg.khop.exact_distance},
                  {"expansion_budget", cfg.khop.expansion_budget}};
  auto& edge_counts = prov["khop"]["edges"] = nlohmann::json::array();
  for (int k = 1; k <= hops.max_hop(); ++k) {
    out.hop_edges.push_back(hops.hop(k).num_edges());
    edge_counts.push_back(hops.hop(k).num_edges());
    if (cfg.model.conv == ConvKind::first_order) {
      out.props.push_back(sym_renormalize(hops.hop(k)));
    } else {
      const auto est = estimate_lambda_max(hops.hop(k));
      prov["lambda_max"].push_back({{"value", est.value}, {"converged", est.converged}, {"fallback", est.fallback}});
      out.props.push_back(scaled_laplacian(hops.hop(k), est.value));
    }
  }

  const FeatureMatrix x = cfg.row_normalize ? row_normalize(ds.features) : ds.features;
  out.features = x.cast<float>();
  out.features.makeCompressed();
  prov["features"] = {{"row_normalize", cfg.row_normalize}};
  return out;
}

PreparedData prepare(const PipelineConfig& cfg) { return prepare(load_pipeline_dataset(cfg), cfg); }

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"schema_version", r.schema_version},
       {"kind", "run"},
       {"seed", r.seed},
       {"status", r.status},
       {"diagnostic", r.diagnostic},
       {"config", r.config},
       {"epochs_run", r.epochs_run},
       {"best_epoch", r.best_epoch},
       {"train_acc", r.train_acc},
       {"val_acc", r.val_acc},
       {"val_loss", r.val_loss},
       {"test_acc", r.test_acc},
       {"branch_weights", r.branch_weights ? nlohmann::json(*r.branch_weights) : nlohmann::json(nullptr)},
       {"wall_s", r.wall_s}};
  auto& h = j["history"] = nlohmann::json::object();
  for (const char* key : {"train_loss", "train_acc", "val_loss", "val_acc"}) h[key] = nlohmann::json::array();
  for (const auto& e : r.history) {
    h["train_loss"].push_back(e.train_loss);
    h["train_acc"].push_back(e.train_acc);
    h["val_loss"].push_back(e.val_loss);
    h["val_acc"].push_back(e.val_acc);
  }
}

void from_json(const nlohmann::json& j, RunReport& r) {
  r.schema_version = j.at("schema_version").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.diagnostic = j.value("diagnostic", std::string());
  r.config = j.value("config", nlohmann::json::object());
  r.epochs_run = j.at("epochs_run").get<int>();
  r.best_epoch = j.at("best_epoch").get<int>();
  r.train_acc = j.at("train_acc").get<double>();
  r.val_acc = j.at("val_acc").get<double>();
  r.val_loss = j.at("val_loss").get<double>();
  r.test_acc = j.at("test_acc").get<double>();
  if (j.contains("branch_weights") && !j.at("branch_weights").is_null()) {
    r.branch_weights = j.at("branch_weights").get<std::vector<double>>();
  }
  r.wall_s = j.value("wall_s", 0.0);
  r.history.clear();
  if (j.contains("history")) {
    const auto& h = j.at("history");
    const auto n = h.at("train_loss").size();
    for (std::size_t i = 0; i < n; ++i) {
      r.history.push_back({h.at("train_loss")[i].get<double>(), h.at("train_acc")[i].get<double>(),
                           h.at("val_loss")[i].get<double>(), h.at("val_acc")[i].get<double>()});
    }
  }
}

namespace {

struct Eval {
  double train_acc = 0, val_acc = 0, val_loss = 0, test_acc = 0;
  std::optional<std::vector<double>> weights;
};

Eval evaluate(const MultiHopModel<float>& model, const PreparedData& data, Rng& rng) {
  const auto fr = model.forward(data.features, false, rng);
  Eval e;
  if (!data.splits.train.empty()) e.train_acc = masked_accuracy<float>(fr.logits, data.labels, data.splits.train);
  if (!data.splits.val.empty()) {
    e.val_acc = masked_accuracy<float>(fr.logits, data.labels, data.splits.val);
    e.val_loss = masked_softmax_xent<float>(fr.logits, data.labels, data.splits.val).loss;
  }
  if (!data.splits.test.empty()) e.test_acc = masked_accuracy<float>(fr.logits, data.labels, data.splits.test);
  if (fr.weights) {
    const auto& w = *fr.weights;
    std::vector<double> mean(static_cast<std::size_t>(w.cols()), 0.0);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < w.rows(); ++r) s += w(r, c);
      mean[c] = s / static_cast<double>(w.rows());
    }
    e.weights = std::move(mean);
  }
  return e;
}

}  // namespace

TrainedModel train_model(const PreparedData& data, const ModelConfig& mcfg, const TrainConfig& tcfg) {
  tcfg.validate();
  mcfg.validate(data.classes);
  if (data.splits.train.empty()) throw std::invalid_argument(data.name + ": empty training split");
  const auto t0 = Clock::now();

  Rng rng(tcfg.seed);
  auto model = MultiHopModel<float>::build(mcfg, std::span<const PropagationMatrix>(data.props),
                                           static_cast<int>(data.features.cols()), rng);
  RunReport rep;
  rep.seed = tcfg.seed;
  rep.config = {{"model", mcfg}, {"train", tcfg}, {"data", data.provenance}};

  const int e1 = tcfg.phase1_epochs(), e2 = tcfg.phase2_epochs();
  auto params = model.parameters();
  const std::span<Tensor2<float>* const> param_span(params);
  Adam<float> adam(e1 > 0 ? tcfg.phase1.lr : (tcfg.phase2.lr > 0 ? tcfg.phase2.lr : 1.0));

  std::vector<Matrix<float>> best = model.snapshot();
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  int epoch = 0;
  bool stop = false;
  for (int phase = 0; phase < 2 && !stop; ++phase) {
    const int epochs = phase == 0 ? e1 : e2;
    if (epochs > 0) adam.set_lr(phase == 0 ? tcfg.phase1.lr : tcfg.phase2.lr);
    for (int i = 0; i < epochs; ++i, ++epoch) {
      const auto loss = model.loss_and_grads(data.features, data.labels, data.splits.train, rng);
      if (!std::isfinite(loss.total)) {
        rep.status = "diverged";
        rep.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) + " (phase " +
                         std::to_string(phase + 1) + ", data " + std::to_string(loss.data) +
                         ", l2 " + std::to_string(loss.l2) + ")";
        stop = true;
        break;
      }
      adam.step(param_span);
      const Eval ev = evaluate(model, data, rng);
      if (tcfg.record_history) rep.history.push_back({loss.total, ev.train_acc, ev.val_loss, ev.val_acc});
      if (ev.val_acc > best_acc || (ev.val_acc == best_acc && ev.val_loss < best_loss)) {
        best_acc = ev.val_acc;
        best_loss = ev.val_loss;
        best = model.snapshot();
        rep.best_epoch = epoch;
      }
      if (tcfg.early_stopping && epoch + 1 >= tcfg.early_stopping->min_epochs &&
          epoch - rep.best_epoch >= tcfg.early_stopping->patience) {
        ++epoch;
        stop = true;
        break;
      }
    }
  }
  rep.epochs_run = epoch;
  model.restore(best);
  const Eval fin = evaluate(model, data, rng);
  rep.train_acc = fin.train_acc;
  rep.val_acc = fin.val_acc;
  rep.val_loss = fin.val_loss;
  rep.test_acc = fin.test_acc;
  rep.branch_weights = fin.weights;
  rep.wall_s = tcfg.deterministic ? 0.0 : seconds_since(t0);
  return {std::move(rep), std::move(model)};
}

RunReport train_one(const PreparedData& data, const ModelConfig& mcfg, const TrainConfig& tcfg) {
  return train_model(data, mcfg, tcfg).report;
}

std::vector<std::size_t> select_top_by_validation(std::span<const double> val_accs, int top_m) {
  if (top_m < 0 || static_cast<std::size_t>(top_m) > val_accs.size()) {
    throw std::invalid_argument("top_m must be in [0, number of runs]");
  }
  std::vector<std::size_t> idx(val_accs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return val_accs[a] > val_accs[b]; });
  idx.resize(static_cast<std::size_t>(top_m));
  return idx;
}

Summary summarize(std::span<const double> xs) {
  Summary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

namespace {

nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

}  // namespace

void to_json(nlohmann::json& j, const AggregateReport& r) {
  j = {{"schema_version", r.schema_version},
       {"kind", "runs"},
       {"protocol", r.protocol},
       {"n_runs", r.n_runs},
       {"top_m", r.top_m},
       {"selected_seeds", nlohmann::json::array()},
       {"test", summary_json(r.test)},
       {"test_all", summary_json(r.test_all)},
       {"runs", r.runs}};
  for (auto i : r.selected) j["selected_seeds"].push_back(r.runs[i].seed);
}

AggregateReport repeated_runs(const PreparedData& data, const ModelConfig& mcfg,
                              const TrainConfig& tcfg, int n_runs, int top_m, int threads) {
  if (n_runs < 1) throw std::invalid_argument("n_runs must be >= 1");
  if (top_m < 1 || top_m > n_runs) throw std::invalid_argument("top_m must be in [1, n_runs]");
  AggregateReport agg;
  agg.n_runs = n_runs;
  agg.top_m = top_m;
  agg.protocol = "top " + std::to_string(top_m) + " of " + std::to_string(n_runs) +
                 " runs by validation accuracy, epochs_scale " + nlohmann::json(tcfg.epochs_scale).dump();
  agg.runs.resize(static_cast<std::size_t>(n_runs));
  run_pool(agg.runs.size(), threads, [&](std::size_t i) {
    TrainConfig t = tcfg;
    t.seed = tcfg.seed + i;
    agg.runs[i] = train_one(data, mcfg, t);
  });
  std::vector<double> val, test;
  for (const auto& r : agg.runs) {
    val.push_back(r.val_acc);
    test.push_back(r.test_acc);
  }
  agg.selected = select_top_by_validation(val, top_m);
  std::vector<double> chosen;
  for (auto i : agg.selected) chosen.push_back(test[i]);
  agg.test = summarize(chosen);
  agg.test_all = summarize(test);
  return agg;
}

void to_json(nlohmann::json& j, const CvReport& r) {
  j = {{"schema_version", r.schema_version},
       {"kind", "cv"},
       {"folds", r.folds},
       {"seed", r.seed},
       {"accuracies", r.accuracies},
       {"test", summary_json(r.test)},
       {"runs", r.runs}};
}

CvReport cross_validate(const PreparedData& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        int folds, std::uint64_t seed, double val_fraction, int threads) {
  const auto parts = stratified_kfold(data.labels, folds, seed);
  CvReport rep;
  rep.folds = folds;
  rep.seed = seed;
  rep.runs.resize(parts.size());
  run_pool(parts.size(), threads, [&](std::size_t f) {
    PreparedData fold = data;
    auto [train, val] = carve_validation(parts[f].train, data.labels, val_fraction, seed + 7919 * (f + 1));
    fold.splits = {std::move(train), std::move(val), parts[f].test};
    TrainConfig t = tcfg;
    t.seed = tcfg.seed + f;
    rep.runs[f] = train_one(fold, mcfg, t);
    rep.runs[f].config["fold"] = f;
  });
  for (const auto& r : rep.runs) rep.accuracies.push_back(r.test_acc);
  rep.test = summarize(rep.accuracies);
  return rep;
}

TTest paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired t-test needs equal-length samples");
  if (a.size() < 2) throw std::invalid_argument("paired t-test needs at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const auto s = summarize(d);
  TTest out;
  out.df = static_cast<int>(d.size()) - 1;
  out.mean_diff = s.mean;
  if (s.std == 0.0) {
    out.t = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
    out.p = s.mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = s.mean / (s.std / std::sqrt(static_cast<double>(d.size())));
  const boost::math::students_t dist(out.df);
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t))));
  return out;
}

void to_json(nlohmann::json& j, const TTest& t) {
  j = {{"mean_diff", t.mean_diff}, {"t", std::isfinite(t.t) ? nlohmann::json(t.t) : nlohmann::json(nullptr)},
       {"p", t.p}, {"df", t.df}};
}

std::string runs_csv(std::span<const RunReport> runs) {
  std::string out = "run_id,seed,val_acc,test_acc,wall_s\n";
  char buf[160];
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%.6f,%.6f,%.3f\n", i,
                  static_cast<unsigned long long>(runs[i].seed), runs[i].val_acc, runs[i].test_acc,
                  runs[i].wall_s);
    out += buf;
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace multihop
