#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rulgp/dataset.hpp"
#include "rulgp/ecm.hpp"
#include "rulgp/parallel.hpp"

namespace rulgp {

enum class FeatureSet { ECM, STATS, BENCHMARK, NOVEL_PRED, NOVEL_CLASS, RATE_CLASS };

std::string_view to_string(FeatureSet set);
/// Accepts "NOVEL_PRED" as well as the CLI spelling "novel-pred".
FeatureSet parse_feature_set(std::string_view text);
const std::vector<std::string>& feature_names(FeatureSet set);
bool is_classification_set(FeatureSet set);

struct FeatureVector {
  std::string cell_id;
  int cycle_index = 0;
  FeatureSet set = FeatureSet::ECM;
  std::vector<std::string> names;
  std::vector<double> values;

  double value(std::string_view name) const;
};

enum class WindowMode { FixedReference, Adjacent };

/// Cycle pair (n, m) whose relaxation or discharge curves are differenced.
struct WindowSpec {
  int reference = 1;  // n
  int current = 2;    // m
  WindowMode mode = WindowMode::FixedReference;

  static WindowSpec fixed(int reference, int current) { return {reference, current, WindowMode::FixedReference}; }
  static WindowSpec adjacent(int current) { return {current - 1, current, WindowMode::Adjacent}; }
  void validate() const;
};

/// Pointwise V_m(t) - V_n(t). Throws TimeGridMismatch.
std::vector<double> delta_v(const RelaxationCurve& curve_m, const RelaxationCurve& curve_n);

struct DeltaVSummary {
  double sum_dv = 0.0;   // V, samples t = dt .. T
  double last_dv = 0.0;  // V, at t = T
};

/// `dv` is sampled at t = k * dt starting from t = 0.
DeltaVSummary delta_v_features(std::span<const double> dv, double dt, double horizon);

struct StatsFeatures {
  // variance, skewness, kurtosis, max, min, mean, sum, last
  std::array<double, 8> values{};
  bool degenerate = false;  // constant input: skewness and kurtosis reported as 0
};

StatsFeatures stats_features(std::span<const double> dv);

inline constexpr std::size_t kDeltaQGridPoints = 1000;
inline constexpr double kDeltaQVarianceFloor = 1e-12;  // Ah^2
inline constexpr double kDeltaTFloor = 1e-3;           // s

/// Capacity as a function of voltage along a discharge, evaluated by
/// monotone piecewise-linear interpolation.
double capacity_at_voltage(const DischargeCurve& curve, double voltage);

/// log10 of the sample variance of Q_m(V) - Q_n(V) on a uniform p-point
/// voltage grid over the overlap of the two curves.
double delta_q_variance(const DischargeCurve& disc_m, const DischargeCurve& disc_n,
                        std::size_t grid_points = kDeltaQGridPoints);

/// log10 |t_m - t_n| of the two discharge durations, floored at 1 ms.
double delta_t(const DischargeCurve& disc_m, const DischargeCurve& disc_n);

struct Throughput {
  double sum_ah = 0.0;
  double sum_days = 0.0;
};

Throughput benchmark_features(const CellHistory& history, int cycle);

struct ExtractionOptions {
  std::optional<std::size_t> truncate;  // keep this many relaxation samples
  std::size_t dq_grid_points = kDeltaQGridPoints;
};

/// ECM fits for every cycle of one cell, computed once, plus feature
/// assembly on top of them. The history must outlive this object.
class CellFeatures {
 public:
  CellFeatures(const CellHistory& history, ExtractionOptions options = {}, Execution exec = Execution::Serial);

  const CellHistory& history() const { return *history_; }
  const FitReport& ecm(int cycle) const;
  FeatureVector assemble(int cycle, const WindowSpec& window, FeatureSet set) const;

 private:
  const CellHistory* history_;
  ExtractionOptions options_;
  std::vector<FitReport> fits_;  // parallel to history_->cycles
};

/// One-off assembly; fits the ECM only for the cycles it needs.
FeatureVector assemble(const CellHistory& history, int cycle, const WindowSpec& window, FeatureSet set,
                       const ExtractionOptions& options = {});

}  // namespace rulgp
