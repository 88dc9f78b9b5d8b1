#include "rulgp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "rulgp/ecm.hpp"
#include "rulgp/errors.hpp"
#include "rulgp/keyvalue.hpp"
#include "rulgp/report.hpp"

namespace rulgp {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw usage_error("LengthMismatch", "observed and predicted lengths differ: " + std::to_string(a) + " vs " +
                                                     std::to_string(b));
  if (a == 0) throw usage_error("Empty", "no samples to score");
}

std::string truncation_text(const std::optional<std::size_t>& t) { return t ? std::to_string(*t) : "full"; }

std::map<std::string, const CellHistory*> index_cells(const std::vector<CellHistory>& cells) {
  std::map<std::string, const CellHistory*> out;
  for (const auto& c : cells) out[c.cell_id] = &c;
  return out;
}

const CellHistory& lookup(const std::map<std::string, const CellHistory*>& index, const std::string& id) {
  const auto it = index.find(id);
  if (it == index.end()) throw data_error("UnknownCell", "split names cell '" + id + "' which is not in the dataset");
  return *it->second;
}

std::string join(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : " ") + s;
  return out;
}

std::vector<CellHistory> split_cells(const std::vector<CellHistory>& cells, const DatasetSplit& split) {
  const auto index = index_cells(cells);
  std::vector<CellHistory> out;
  for (const auto* group : {&split.train, &split.test}) {
    for (const auto& id : *group) out.push_back(lookup(index, id));
  }
  return out;
}

std::vector<Chemistry> chemistries_of(const std::vector<CellHistory>& cells, const DatasetSplit& split) {
  const auto index = index_cells(cells);
  std::set<Chemistry> chems;
  for (const auto* group : {&split.train, &split.test}) {
    for (const auto& id : *group) chems.insert(lookup(index, id).chemistry);
  }
  return {chems.begin(), chems.end()};
}

void base_config(std::map<std::string, std::string>& cfg, const DatasetSplit& split) {
  cfg["split.seed"] = std::to_string(split.seed);
  cfg["split.train"] = join(split.train);
  cfg["split.test"] = join(split.test);
}

// Owns a cache when the caller did not supply a matching one.
struct CacheHandle {
  std::optional<FeatureCache> owned;
  const FeatureCache* cache = nullptr;

  CacheHandle(const FeatureCache* given, const std::vector<CellHistory>& cells, const DatasetSplit& split,
              const ExtractionOptions& options) {
    if (given && given->options().truncate == options.truncate &&
        given->options().dq_grid_points == options.dq_grid_points) {
      cache = given;
    } else {
      owned.emplace(split_cells(cells, split), options);
      cache = &*owned;
    }
  }
};

}  // namespace

double rmse(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y.size(), y_hat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double mape(std::span<const double> y, std::span<const double> y_hat, std::span<const double> eol) {
  check_lengths(y.size(), y_hat.size());
  if (eol.size() != y.size()) throw usage_error("LengthMismatch", "EOL vector length differs");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(eol[i] > 0.0)) throw data_error("ZeroEol", "EOL cycle must be positive");
    s += std::fabs(y[i] - y_hat[i]) / eol[i];
  }
  return s / static_cast<double>(y.size()) * 100.0;
}

FeatureCache::FeatureCache(const std::vector<CellHistory>& cells, ExtractionOptions options, Execution exec)
    : options_(options) {
  // Cells are stored by value elsewhere; keep a private copy so references stay valid.
  for (const auto& c : cells) histories_.push_back(std::make_unique<CellHistory>(c));
  for (const auto& h : histories_) cells_.emplace(h->cell_id, CellFeatures(*h, options_, exec));
}

const CellFeatures& FeatureCache::at(const std::string& cell_id) const {
  const auto it = cells_.find(cell_id);
  if (it == cells_.end()) throw data_error("UnknownCell", "no features for cell '" + cell_id + "'");
  return it->second;
}

std::vector<RulSample> rul_samples(const CellFeatures& cell, FeatureSet set, int reference, int stride,
                                   double soh_eol) {
  const auto& h = cell.history();
  std::vector<RulSample> out;
  if (!h.eol_cycle || stride < 1) return out;
  if (set != FeatureSet::ECM && !h.find_cycle(reference)) return out;
  for (const auto& rec : h.cycles) {
    const int m = rec.cycle_index;
    if (m <= reference || (m - reference) % stride != 0) continue;
    if (m > *h.eol_cycle || !(h.soh(rec) > soh_eol)) continue;
    RulSample s;
    s.features = cell.assemble(m, WindowSpec::fixed(reference, m), set);
    s.rul = *h.eol_cycle - m;
    s.soh = h.soh(rec);
    s.eol = *h.eol_cycle;
    s.condition = h.condition;
    out.push_back(std::move(s));
  }
  return out;
}

Eigen::MatrixXd feature_matrix(const std::vector<FeatureVector>& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().values.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].values.size() != static_cast<std::size_t>(x.cols())) {
      throw usage_error("DimensionMismatch", "feature vectors differ in length");
    }
    for (Eigen::Index m = 0; m < x.cols(); ++m) x(static_cast<Eigen::Index>(i), m) = rows[i].values[static_cast<std::size_t>(m)];
  }
  return x;
}

GprModel train_rul_model(const std::vector<RulSample>& samples, const GprConfig& config) {
  if (samples.empty()) throw data_error("InsufficientData", "no training samples for regression");
  std::vector<FeatureVector> fv;
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    fv.push_back(samples[i].features);
    y(static_cast<Eigen::Index>(i)) = samples[i].rul;
  }
  GprModel model = GprModel::train(feature_matrix(fv), y, config);
  model.metadata["feature_set"] = std::string(to_string(samples.front().features.set));
  std::string names;
  for (const auto& n : samples.front().features.names) names += (names.empty() ? "" : ",") + n;
  model.metadata["features"] = names;
  model.metadata["training_samples"] = std::to_string(samples.size());
  return model;
}

std::vector<RulMetricRow> rul_metrics(const std::vector<RulPredictionRow>& predictions) {
  using Key = std::tuple<std::string, std::string, std::size_t, int, std::string>;
  std::map<Key, std::vector<const RulPredictionRow*>> groups;
  for (const auto& p : predictions) {
    groups[{p.feature_set, p.chemistry, p.truncation, p.reference_cycle, p.condition}].push_back(&p);
    groups[{p.feature_set, p.chemistry, p.truncation, p.reference_cycle, "ALL"}].push_back(&p);
  }
  std::vector<RulMetricRow> out;
  for (const auto& [key, rows] : groups) {
    std::vector<double> y, yh, eol;
    for (const auto* r : rows) {
      y.push_back(r->rul);
      yh.push_back(r->predicted);
      eol.push_back(r->eol);
    }
    RulMetricRow m;
    std::tie(m.feature_set, m.chemistry, m.truncation, m.reference_cycle, m.condition) = key;
    m.samples = rows.size();
    m.rmse = rmse(y, yh);
    m.mape = mape(y, yh, eol);
    out.push_back(m);
  }
  return out;
}

std::string ExperimentReport::fingerprint() const {
  auto cfg = config;
  cfg["kind"] = kind;
  return fingerprint_of(cfg);
}

void ExperimentReport::append(const ExperimentReport& other) {
  predictions.insert(predictions.end(), other.predictions.begin(), other.predictions.end());
  metrics.insert(metrics.end(), other.metrics.begin(), other.metrics.end());
  importance.insert(importance.end(), other.importance.begin(), other.importance.end());
  class_predictions.insert(class_predictions.end(), other.class_predictions.begin(), other.class_predictions.end());
  accuracy.insert(accuracy.end(), other.accuracy.begin(), other.accuracy.end());
  confusion.insert(confusion.end(), other.confusion.begin(), other.confusion.end());
}

ExperimentReport run_rul_experiment(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                    const RulExperimentConfig& config, const FeatureCache* cache) {
  if (config.truncate && *config.truncate < kMinRelaxationSamples) {
    throw data_error("InsufficientData", "minimum " + std::to_string(kMinRelaxationSamples) +
                                             " relaxation samples, got " + std::to_string(*config.truncate));
  }
  if (is_classification_set(config.feature_set)) {
    throw usage_error("UsageError", std::string(to_string(config.feature_set)) + " is a classification feature set");
  }
  ExtractionOptions options;
  options.truncate = config.truncate;
  const CacheHandle handle(cache, cells, split, options);
  const auto index = index_cells(cells);

  ExperimentReport report;
  report.kind = "rul";
  auto& cfg = report.config;
  cfg["feature_set"] = std::string(to_string(config.feature_set));
  cfg["reference_cycle"] = std::to_string(config.reference_cycle);
  cfg["truncation"] = truncation_text(config.truncate);
  cfg["train_stride"] = std::to_string(config.train_stride);
  cfg["soh_eol"] = format_exact(config.soh_eol);
  cfg["gpr.restarts"] = std::to_string(config.gpr.restarts);
  cfg["gpr.max_iterations"] = std::to_string(config.gpr.max_iterations);
  cfg["gpr.seed"] = std::to_string(config.gpr.seed);
  base_config(cfg, split);

  const std::size_t trunc = config.truncate.value_or(0);
  for (const Chemistry chem : chemistries_of(cells, split)) {
    std::vector<RulSample> train, test;
    std::vector<std::string> test_ids;
    for (const auto& id : split.train) {
      const auto& h = lookup(index, id);
      if (h.chemistry != chem) continue;
      auto s = rul_samples(handle.cache->at(id), config.feature_set, config.reference_cycle, config.train_stride,
                           config.soh_eol);
      train.insert(train.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    for (const auto& id : split.test) {
      const auto& h = lookup(index, id);
      if (h.chemistry != chem) continue;
      auto s = rul_samples(handle.cache->at(id), config.feature_set, config.reference_cycle, 1, config.soh_eol);
      for (std::size_t k = 0; k < s.size(); ++k) test_ids.push_back(id);
      test.insert(test.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    if (train.empty()) {
      throw data_error("InsufficientData", "no training samples for " + std::string(to_string(chem)));
    }
    const GprModel model = train_rul_model(train, config.gpr);
    const auto& names = train.front().features.names;
    const Eigen::VectorXd w = model.relative_importance(), wi = model.inverse_length_importance();
    for (std::size_t m = 0; m < names.size(); ++m) {
      const auto e = static_cast<Eigen::Index>(m);
      report.importance.push_back({cfg["feature_set"], std::string(to_string(chem)), trunc, config.reference_cycle,
                                   names[m], model.kernel().length_scales(e), w(e), wi(e)});
    }
    if (test.empty()) continue;
    std::vector<FeatureVector> fv;
    for (const auto& s : test) fv.push_back(s.features);
    const auto pred = model.predict(feature_matrix(fv), Execution::Parallel);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      RulPredictionRow row;
      row.feature_set = cfg["feature_set"];
      row.chemistry = std::string(to_string(chem));
      row.condition = test[i].condition;
      row.cell_id = test_ids[i];
      row.truncation = trunc;
      row.reference_cycle = config.reference_cycle;
      row.cycle = test[i].features.cycle_index;
      row.soh = test[i].soh;
      row.eol = test[i].eol;
      row.rul = test[i].rul;
      row.predicted = pred.mean(e);
      row.predicted_sd = std::sqrt(pred.variance(e));
      report.predictions.push_back(std::move(row));
    }
  }
  report.metrics = rul_metrics(report.predictions);
  return report;
}

ExperimentReport run_feature_comparison(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                        const std::vector<FeatureSet>& sets, const RulExperimentConfig& base) {
  ExtractionOptions options;
  options.truncate = base.truncate;
  const FeatureCache cache(split_cells(cells, split), options);
  ExperimentReport report;
  report.kind = "rul";
  std::string names;
  for (const auto set : sets) {
    RulExperimentConfig cfg = base;
    cfg.feature_set = set;
    const auto part = run_rul_experiment(cells, split, cfg, &cache);
    if (report.config.empty()) report.config = part.config;
    names += (names.empty() ? "" : ",") + std::string(to_string(set));
    report.append(part);
  }
  report.config["feature_set"] = names;
  report.metrics = rul_metrics(report.predictions);
  return report;
}

ExperimentReport run_truncation_sweep(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                      const RulExperimentConfig& base, const std::vector<std::size_t>& sample_counts) {
  for (auto c : sample_counts) {
    if (c != 0 && c < kMinRelaxationSamples) {
      throw data_error("InsufficientData", "minimum " + std::to_string(kMinRelaxationSamples) +
                                               " relaxation samples, got " + std::to_string(c));
    }
  }
  ExperimentReport report;
  report.kind = "truncation";
  std::string counts;
  for (auto c : sample_counts) {
    RulExperimentConfig cfg = base;
    cfg.truncate = c == 0 ? std::nullopt : std::optional<std::size_t>(c);
    const auto part = run_rul_experiment(cells, split, cfg);
    if (report.config.empty()) report.config = part.config;
    counts += (counts.empty() ? "" : ",") + truncation_text(cfg.truncate);
    report.append(part);
  }
  report.config["truncation"] = counts;
  report.metrics = rul_metrics(report.predictions);
  return report;
}

ExperimentReport run_start_sweep(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                 const RulExperimentConfig& base, const std::vector<int>& reference_cycles) {
  ExtractionOptions options;
  options.truncate = base.truncate;
  const FeatureCache cache(split_cells(cells, split), options);
  ExperimentReport report;
  report.kind = "start-sweep";
  std::string refs;
  for (int n : reference_cycles) {
    RulExperimentConfig cfg = base;
    cfg.reference_cycle = n;
    const auto part = run_rul_experiment(cells, split, cfg, &cache);
    if (report.config.empty()) report.config = part.config;
    refs += (refs.empty() ? "" : ",") + std::to_string(n);
    report.append(part);
  }
  report.config["reference_cycle"] = refs;
  report.metrics = rul_metrics(report.predictions);
  return report;
}

std::vector<ClassSample> class_samples(const CellFeatures& cell, FeatureSet set, int first_cycle, int last_cycle,
                                       const ThresholdPolicy& policy, int stride, double soh_eol) {
  const auto& h = cell.history();
  std::vector<ClassSample> out;
  if (!h.eol_cycle || stride < 1) return out;
  for (const auto& rec : h.cycles) {
    const int m = rec.cycle_index;
    if (m < first_cycle || m > last_cycle || (m - first_cycle) % stride != 0) continue;
    if (m > *h.eol_cycle || !(h.soh(rec) > soh_eol) || !h.find_cycle(m - 1)) continue;
    ClassSample s;
    s.features = cell.assemble(m, WindowSpec::adjacent(m), set);
    s.soh = h.soh(rec);
    s.rul = *h.eol_cycle - m;
    s.label = label_sample(s.rul, threshold(policy, s.soh));
    out.push_back(std::move(s));
  }
  return out;
}

LifeDag train_class_model(const std::vector<ClassSample>& samples, const GpcConfig& config) {
  if (samples.empty()) throw data_error("EmptyWindow", "no training samples in the classification window");
  std::vector<FeatureVector> fv;
  std::vector<LifetimeLabel> labels;
  for (const auto& s : samples) {
    fv.push_back(s.features);
    labels.push_back(s.label);
  }
  LifeDag dag = LifeDag::train(feature_matrix(fv), labels, config);
  dag.metadata["feature_set"] = std::string(to_string(samples.front().features.set));
  std::string names;
  for (const auto& n : samples.front().features.names) names += (names.empty() ? "" : ",") + n;
  dag.metadata["features"] = names;
  dag.metadata["training_samples"] = std::to_string(samples.size());
  return dag;
}

std::vector<AccuracyRow> class_accuracy(const std::vector<ClassPredictionRow>& predictions) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::pair<std::size_t, std::size_t>> groups;
  for (const auto& p : predictions) {
    const std::size_t hit = p.truth == p.predicted ? 1 : 0;
    for (const auto& cond : {p.condition, std::string("ALL")}) {
      auto& g = groups[{p.feature_set, p.chemistry, cond}];
      g.first += 1;
      g.second += hit;
    }
  }
  std::vector<AccuracyRow> out;
  for (const auto& [key, counts] : groups) {
    AccuracyRow row;
    std::tie(row.feature_set, row.chemistry, row.condition) = key;
    row.samples = counts.first;
    row.correct = counts.second;
    row.accuracy = static_cast<double>(counts.second) / static_cast<double>(counts.first);
    out.push_back(row);
  }
  return out;
}

std::vector<ConfusionRow> class_confusion(const std::vector<ClassPredictionRow>& predictions) {
  std::map<std::tuple<std::string, std::string, int>, std::array<std::size_t, 3>> groups;
  for (const auto& p : predictions) {
    groups[{p.feature_set, p.chemistry, static_cast<int>(p.truth)}][static_cast<std::size_t>(p.predicted)] += 1;
  }
  std::vector<ConfusionRow> out;
  for (const auto& [key, counts] : groups) {
    out.push_back({std::get<0>(key), std::get<1>(key), static_cast<LifetimeLabel>(std::get<2>(key)), counts});
  }
  return out;
}

ExperimentReport run_classification_experiment(const std::vector<CellHistory>& cells, const DatasetSplit& split,
                                               const ClassificationConfig& config, const FeatureCache* cache) {
  if (config.window_cycles < 0) throw usage_error("InvalidWindow", "window size must be non-negative");
  const CacheHandle handle(cache, cells, split, ExtractionOptions{});
  const auto index = index_cells(cells);
  const int first = std::max(config.test_cycle - config.window_cycles / 2, 2);
  const int last = config.test_cycle + config.window_cycles / 2;

  ExperimentReport report;
  report.kind = "classification";
  auto& cfg = report.config;
  cfg["feature_set"] = std::string(to_string(config.feature_set));
  cfg["test_cycle"] = std::to_string(config.test_cycle);
  cfg["window_cycles"] = std::to_string(config.window_cycles);
  cfg["train_stride"] = std::to_string(config.train_stride);
  cfg["include_ncm_nca"] = config.include_ncm_nca ? "true" : "false";
  cfg["soh_eol"] = format_exact(config.soh_eol);
  cfg["gpc.restarts"] = std::to_string(config.gpc.restarts);
  cfg["gpc.seed"] = std::to_string(config.gpc.seed);
  if (config.policy) {
    cfg["threshold.upper"] = format_exact(config.policy->upper_at_soh1);
    cfg["threshold.lower"] = format_exact(config.policy->lower_at_soh1);
  }
  base_config(cfg, split);

  bool any_chemistry = false;
  for (const Chemistry chem : chemistries_of(cells, split)) {
    if (chem == Chemistry::NCM_NCA && !config.include_ncm_nca) continue;
    any_chemistry = true;
    const ThresholdPolicy policy = config.policy.value_or(ThresholdPolicy::for_chemistry(chem));
    std::vector<ClassSample> train;
    for (const auto& id : split.train) {
      if (lookup(index, id).chemistry != chem) continue;
      auto s = class_samples(handle.cache->at(id), config.feature_set, first, last, policy, config.train_stride,
                             config.soh_eol);
      train.insert(train.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    if (train.empty()) {
      throw data_error("EmptyWindow", "no " + std::string(to_string(chem)) + " training samples in cycles [" +
                                          std::to_string(first) + ", " + std::to_string(last) + "]");
    }
    const LifeDag dag = train_class_model(train, config.gpc);
    for (const auto& id : split.test) {
      const auto& h = lookup(index, id);
      if (h.chemistry != chem) continue;
      const auto samples = class_samples(handle.cache->at(id), config.feature_set, first, last, policy, 1,
                                         config.soh_eol);
      if (samples.empty()) continue;
      std::vector<FeatureVector> fv;
      for (const auto& s : samples) fv.push_back(s.features);
      const auto decisions = dag.classify(feature_matrix(fv));
      for (std::size_t i = 0; i < samples.size(); ++i) {
        ClassPredictionRow row;
        row.feature_set = cfg["feature_set"];
        row.chemistry = std::string(to_string(chem));
        row.condition = h.condition;
        row.cell_id = id;
        row.cycle = samples[i].features.cycle_index;
        row.soh = samples[i].soh;
        row.rul = samples[i].rul;
        row.truth = samples[i].label;
        row.predicted = decisions[i].label;
        row.probability = decisions[i].probability;
        row.stage1_long = decisions[i].stage1_long;
        report.class_predictions.push_back(std::move(row));
      }
    }
  }
  if (!any_chemistry) {
    throw usage_error("UsageError", "no chemistry left for classification (NCM+NCA is excluded by default)");
  }
  report.accuracy = class_accuracy(report.class_predictions);
  report.confusion = class_confusion(report.class_predictions);
  return report;
}

}  // namespace rulgp
