#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rulgp/harness.hpp"

namespace rulgp {

inline constexpr const char* kToolVersion = "0.1.0";

/// "# rulgp <version> fingerprint=<hex>"
std::string header_line(const std::string& fingerprint);
/// FNV-1a over "key=value" lines in key order.
std::string fingerprint_of(const std::map<std::string, std::string>& config);

/// Header line followed by the configuration as "# key = value" comments.
void write_preamble(std::ostream& out, const ExperimentReport& report);

void write_rul_predictions_csv(std::ostream& out, const ExperimentReport& report);
void write_rul_metrics_csv(std::ostream& out, const ExperimentReport& report);
/// Rows chemistry x condition, one RMSE and one MAPE column per feature set.
void write_table_ii_csv(std::ostream& out, const ExperimentReport& report);
void write_importance_csv(std::ostream& out, const ExperimentReport& report);
/// Truncation level against RMSE; time = count * sampling interval.
void write_truncation_csv(std::ostream& out, const ExperimentReport& report,
                          const std::map<std::string, double>& interval_s_by_chemistry);
void write_class_predictions_csv(std::ostream& out, const ExperimentReport& report);
void write_accuracy_csv(std::ostream& out, const ExperimentReport& report);
/// Rows chemistry x condition, one accuracy column per feature set.
void write_table_iii_csv(std::ostream& out, const ExperimentReport& report);
void write_confusion_csv(std::ostream& out, const ExperimentReport& report);
/// Flat "key = value" summary of configuration and every metric.
void write_summary(std::ostream& out, const ExperimentReport& report);

/// Reads back prediction files written above (comment lines skipped).
std::vector<RulPredictionRow> read_rul_predictions_csv(std::istream& in);
std::vector<ClassPredictionRow> read_class_predictions_csv(std::istream& in);

void write_rul_scatter_svg(std::ostream& out, const ExperimentReport& report);
void write_truncation_svg(std::ostream& out, const ExperimentReport& report);
void write_probability_svg(std::ostream& out, const ExperimentReport& report);

struct ReportOptions {
  bool plots = false;
  std::map<std::string, double> interval_s_by_chemistry;  // for truncation tables
};

/// Writes every table that applies to the report kind into `dir`, plus
/// summary.txt. Returns the written paths.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const ExperimentReport& report,
                                                const ReportOptions& options = {});

}  // namespace rulgp
