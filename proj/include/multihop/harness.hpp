#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "multihop/dataset.hpp"
#include "multihop/khop.hpp"
#include "multihop/model.hpp"

namespace multihop {

inline constexpr int kReportSchemaVersion = 1;

struct Phase {
  int epochs = 0;
  double lr = 0.0;
};

struct EarlyStopping {
  int patience = 100;
  int min_epochs = 200;
};

struct TrainConfig {
  Phase phase1{2000, 0.005};
  Phase phase2{1000, 0.001};
  std::optional<EarlyStopping> early_stopping;
  std::uint64_t seed = 0;
  /// Multiplies both phase lengths (desk presets use 0.25).
  double epochs_scale = 1.0;
  bool record_history = true;
  /// Drops wall-clock fields so reports are byte-reproducible.
  bool deterministic = false;

  void validate() const;
  int phase1_epochs() const;
  int phase2_epochs() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

enum class AffinityMode { none, features, meta };

std::string to_string(AffinityMode m);
AffinityMode affinity_mode_from_string(const std::string& s);

struct SyntheticSpec {
  std::string kind;  // "twohop" or "tabular"
  NodeId n = 300;
  int classes = 3;
  int feature_dim = 16;  // tabular only
  std::uint64_t seed = 0;
};

/// Everything a run needs before training: where the data comes from, how it
/// is split and weighted, and the model/training settings.
struct PipelineConfig {
  std::string dataset_path;
  std::optional<SyntheticSpec> synthetic;
  /// auto | file | planetoid | random
  std::string split = "auto";
  std::uint64_t split_seed = 0;
  bool row_normalize = true;
  /// Defaults to meta when the dataset has a meta table and no graph, else features.
  std::optional<AffinityMode> affinity;
  AffinityConfig affinity_cfg;
  KhopOptions khop;
  ModelConfig model;
  TrainConfig train;
  int runs = 20;
  int top = 10;
  int folds = 10;
  std::uint64_t cv_seed = 0;
  double cv_val_fraction = 0.1;
  int threads = 0;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::string& path);

struct PreparedData {
  std::string name;
  int classes = 0;
  SparseMatrix<float> features;
  std::vector<int> labels;
  Splits splits;
  /// One operator per branch, ℰ_1 first.
  std::vector<PropagationMatrix> props;
  WeightedGraph base;
  std::vector<std::size_t> hop_edges;
  nlohmann::json provenance = nlohmann::json::object();
};

Dataset load_pipeline_dataset(const PipelineConfig& cfg);
PreparedData prepare(const Dataset& ds, const PipelineConfig& cfg);
PreparedData prepare(const PipelineConfig& cfg);

struct EpochStats {
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

struct RunReport {
  int schema_version = kReportSchemaVersion;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | diverged
  std::string diagnostic;
  nlohmann::json config = nlohmann::json::object();
  std::vector<EpochStats> history;
  int epochs_run = 0;
  int best_epoch = -1;  // -1: no epoch ran; parameters are the initial ones
  double train_acc = 0, val_acc = 0, val_loss = 0, test_acc = 0;
  std::optional<std::vector<double>> branch_weights;
  double wall_s = 0;
};

void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

struct TrainedModel {
  RunReport report;
  MultiHopModel<float> model;
};

/// Adam over phase1 then phase2, evaluating validation every epoch; test
/// accuracy is taken at the best-validation parameters (ties favour lower
/// validation loss, then the earlier epoch).
TrainedModel train_model(const PreparedData& data, const ModelConfig& mcfg, const TrainConfig& tcfg);
RunReport train_one(const PreparedData& data, const ModelConfig& mcfg, const TrainConfig& tcfg);

/// Indices of the `top_m` largest validation accuracies, ties to the lower
/// index. Takes validation metrics only.
std::vector<std::size_t> select_top_by_validation(std::span<const double> val_accs, int top_m);

struct Summary {
  double mean = 0, std = 0;
  std::size_t count = 0;
};

/// Sample standard deviation (n - 1); 0 for fewer than two values.
Summary summarize(std::span<const double> xs);

struct AggregateReport {
  int schema_version = kReportSchemaVersion;
  std::string protocol;
  int n_runs = 0, top_m = 0;
  std::vector<RunReport> runs;  // ascending seed
  std::vector<std::size_t> selected;
  Summary test;
  Summary test_all;
};

void to_json(nlohmann::json& j, const AggregateReport& r);

/// Runs seeds tcfg.seed .. tcfg.seed + n_runs - 1 on a worker pool.
AggregateReport repeated_runs(const PreparedData& data, const ModelConfig& mcfg,
                              const TrainConfig& tcfg, int n_runs, int top_m, int threads = 0);

struct CvReport {
  int schema_version = kReportSchemaVersion;
  int folds = 0;
  std::uint64_t seed = 0;
  std::vector<RunReport> runs;  // fold order
  std::vector<double> accuracies;
  Summary test;
};

void to_json(nlohmann::json& j, const CvReport& r);

/// Stratified k-fold over the labeled nodes. Each fold's training part gives
/// up a stratified `val_fraction` as validation (for early stopping and the
/// best-validation checkpoint); the fold's test part is evaluated.
CvReport cross_validate(const PreparedData& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        int folds, std::uint64_t seed, double val_fraction = 0.1, int threads = 0);

struct TTest {
  double mean_diff = 0, t = 0, p = 1;
  int df = 0;
};

/// Two-sided paired t-test on a - b.
TTest paired_ttest(std::span<const double> a, std::span<const double> b);

void to_json(nlohmann::json& j, const TTest& t);

/// `run_id,seed,val_acc,test_acc,wall_s`
std::string runs_csv(std::span<const RunReport> runs);
void write_text(const std::string& path, const std::string& text);

}  // namespace multihop
