#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rulgp/dataset.hpp"
#include "rulgp/features.hpp"
#include "rulgp/gpc.hpp"
#include "rulgp/harness.hpp"

namespace rulgp {

/// Every setting a CLI run can take. Keys accepted by set() are the long
/// flag names, so a config file line `feature-set = ecm` and the flag
/// `--feature-set ecm` mean the same thing.
struct RunConfig {
  std::filesystem::path out_dir = ".";
  std::optional<std::filesystem::path> manifest;  // default: <out>/manifest.txt
  std::optional<Chemistry> chemistry;
  FeatureSet feature_set = FeatureSet::NOVEL_PRED;
  std::string study = "rul";  // rul | table-ii | truncation | start-sweep | classification | table-iii
  int reference_cycle = 1;
  std::optional<std::size_t> truncate;
  std::vector<std::size_t> truncation_counts = {6, 8, 12, 16};
  std::vector<int> start_cycles = {1, 50, 100, 150};
  int train_stride = 10;
  int test_cycle = 500;
  int window_cycles = 100;
  std::optional<double> threshold_upper;
  std::optional<double> threshold_lower;
  bool include_ncm_nca = false;
  std::uint64_t seed = 7;
  int restarts = 5;
  bool plots = false;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> predictions;        // report input
  std::optional<std::filesystem::path> class_predictions;  // report input
  int threads = 0;  // 0 = OpenMP default
  // simulate
  int cells = 5;
  int conditions = 3;
  std::string preset = "standard";  // standard | lifetime-classes
  double noise_v = 0.0;
  double cell_spread = 0.1;

  /// Throws UsageError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Applies every `key = value` of the file's global section.
  void load_file(const std::filesystem::path& path);
  std::map<std::string, std::string> to_map() const;

  std::filesystem::path manifest_path() const { return manifest.value_or(out_dir / "manifest.txt"); }
  std::optional<ThresholdPolicy> policy() const;
  RulExperimentConfig rul_config() const;
  ClassificationConfig class_config() const;
};

/// Keys understood by RunConfig::set, in documentation order.
const std::vector<std::string>& run_config_keys();

}  // namespace rulgp
