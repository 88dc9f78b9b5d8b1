#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulgp/dataset.hpp"
#include "rulgp/features.hpp"
#include "rulgp/gpc.hpp"
#include "rulgp/gpr.hpp"

namespace rulgp {

/// sqrt(mean((y - y_hat)^2)). Throws LengthMismatch, Empty.
double rmse(std::span<const double> y, std::span<const double> y_hat);
/// mean(|y - y_hat| / eol) * 100. Throws LengthMismatch, Empty, ZeroEol.
double mape(std::span<const double> y, std::span<const double> y_hat, std::span<const double> eol);

struct RulSample {
  FeatureVector features;
  double rul = 0.0;
  double soh = 0.0;
  double eol = 0.0;
  std::string condition;
};

/// ECM fits for every cycle of every cell, keyed by cell id, for one
/// truncation level.
class FeatureCache {
 public:
  FeatureCache(const std::vector<CellHistory>& cells, ExtractionOptions options, Execution exec = Execution::Parallel);
  const CellFeatures& at(const std::string& cell_id) const;
  const ExtractionOptions& options() const { return options_; }

 private:
  ExtractionOptions options_;
  std::vector<std::unique_ptr<CellHistory>> histories_;
  std::map<std::string, CellFeatures> cells_;
};

/// Regression samples of one cell: cycles m > `reference` with a known EOL
/// and SOH above the retirement fraction, every `stride`-th cycle counted
/// from the reference.
std::vector<RulSample> rul_samples(const CellFeatures& cell, FeatureSet set, int reference, int stride = 1,
                                   double soh_eol = kDefaultSohEol);

struct RulExperimentConfig {
  FeatureSet feature_set = FeatureSet::NOVEL_PRED;
  int reference_cycle = 1;  // n of the fixed window; predictions for m > n
  std::optional<std::size_t> truncate;
  int train_stride = 10;  // subsampling of training cycles
  double soh_eol = kDefaultSohEol;
  GprConfig gpr;
};

struct RulPredictionRow {
  std::string feature_set;
  std::string chemistry;
  std::string condition;
  std::string cell_id;
  std::size_t truncation = 0;  // 0 = full curve
  int reference_cycle = 1;
  int cycle = 0;
  double soh = 0.0;
  double eol = 0.0;
  double rul = 0.0;
  double predicted = 0.0;
  double predicted_sd = 0.0;
};

struct RulMetricRow {
  std::string feature_set;
  std::string chemistry;
  std::string condition;  // "ALL" for the chemistry aggregate
  std::size_t truncation = 0;
  int reference_cycle = 1;
  std::size_t samples = 0;
  double rmse = 0.0;
  double mape = 0.0;
};

struct ImportanceRow {
  std::string feature_set;
  std::string chemistry;
  std::size_t truncation = 0;
  int reference_cycle = 1;
  std::string feature;
  double length_scale = 0.0;
  double weight = 0.0;          // l_m / sum(l)
  double inverse_weight = 0.0;  // (1/l_m) / sum(1/l)
};

struct ClassPredictionRow {
  std::string feature_set;
  std::string chemistry;
  std::string condition;
  std::string cell_id;
  int cycle = 0;
  double soh = 0.0;
  double rul = 0.0;
  LifetimeLabel truth = LifetimeLabel::Medium;
  LifetimeLabel predicted = LifetimeLabel::Medium;
  double probability = 0.0;
  double stage1_long = 0.0;
};

struct AccuracyRow {
  std::string feature_set;
  std::string chemistry;
  std::string condition;  // "ALL" for the overall figure
  std::size_t samples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct ConfusionRow {
  std::string feature_set;
  std::string chemistry;
  LifetimeLabel truth = LifetimeLabel::Medium;
  std::array<std::size_t, 3> predicted{};  // Short, Medium, Long
};

struct ExperimentReport {
  std::string kind;  // "rul", "truncation", "start-sweep", "classification"
  std::map<std::string, std::string> config;
  std::vector<RulPredictionRow> predictions;
  std::vector<RulMetricRow> metrics;
  std::vector<ImportanceRow> importance;
  std::vector<ClassPredictionRow> class_predictions;
  std::vector<AccuracyRow> accuracy;
  std::vector<ConfusionRow> confusion;

  /// FNV-1a of the canonical configuration text.
  std::string fingerprint() const;
  void append(const ExperimentReport& other);
};

/// Recomputes RMSE and MAPE of every metric row from `predictions`.
std::vector<RulMetricRow> rul_metrics(const std::vector<RulPredictionRow>& predictions);
/// Recomputes accuracy rows and confusion matrices from class predictions.
std::vector<AccuracyRow> class_accuracy(const std::vector<ClassPredictionRow>& predictions);
std::vector<ConfusionRow> class_confusion(const std::vector<ClassPredictionRow>& predictions);

/// One GPR per chemistry, pooled over conditions, trained on the training
/// cells and evaluated on every eligible cycle of the test cells.
ExperimentReport run_rul_experiment(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                    const RulExperimentConfig& config, const FeatureCache* cache = nullptr);

/// Table II: run_rul_experiment for each feature set.
ExperimentReport run_feature_comparison(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                        const std::vector<FeatureSet>& sets, const RulExperimentConfig& base);

inline const std::vector<FeatureSet> kTableIISets = {FeatureSet::ECM, FeatureSet::STATS, FeatureSet::BENCHMARK,
                                                     FeatureSet::NOVEL_PRED};
inline const std::vector<FeatureSet> kTableIIISets = {FeatureSet::ECM, FeatureSet::RATE_CLASS, FeatureSet::BENCHMARK,
                                                      FeatureSet::NOVEL_CLASS};

/// Relaxation-time truncation study; counts below the ECM minimum are
/// rejected with InsufficientData. A count of 0 means the full curve.
ExperimentReport run_truncation_sweep(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                      const RulExperimentConfig& base, const std::vector<std::size_t>& sample_counts);

/// Reference-cycle sweep (the window start n).
ExperimentReport run_start_sweep(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                 const RulExperimentConfig& base, const std::vector<int>& reference_cycles);

struct ClassificationConfig {
  FeatureSet feature_set = FeatureSet::NOVEL_CLASS;
  int test_cycle = 500;
  int window_cycles = 100;
  std::optional<ThresholdPolicy> policy;  // per chemistry when absent
  bool include_ncm_nca = false;
  int train_stride = 1;
  double soh_eol = kDefaultSohEol;
  GpcConfig gpc;
};

/// Cycles [test - w/2, test + w/2] of the training cells train the DAG; the
/// same window of the test cells is classified.
ExperimentReport run_classification_experiment(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                               const ClassificationConfig& config,
                                               const FeatureCache* cache = nullptr);

/// Labelled classification samples of one cell within a cycle window.
struct ClassSample {
  FeatureVector features;
  double soh = 0.0;
  double rul = 0.0;
  LifetimeLabel label = LifetimeLabel::Medium;
};
std::vector<ClassSample> class_samples(const CellFeatures& cell, FeatureSet set, int first_cycle, int last_cycle,
                                       const ThresholdPolicy& policy, int stride = 1,
                                       double soh_eol = kDefaultSohEol);

/// Model training entry points shared with the CLI.
GprModel train_rul_model(const std::vector<RulSample>& samples, const GprConfig& config);
LifeDag train_class_model(const std::vector<ClassSample>& samples, const GpcConfig& config);

Eigen::MatrixXd feature_matrix(const std::vector<FeatureVector>& rows);

}  // namespace rulgp
