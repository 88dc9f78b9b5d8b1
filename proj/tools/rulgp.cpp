// rulgp command-line frontend: simulate or ingest cycling data, extract
// relaxation features, train GP models and write experiment reports.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "rulgp/config.hpp"
#include "rulgp/dataset.hpp"
#include "rulgp/ecm.hpp"
#include "rulgp/errors.hpp"
#include "rulgp/features.hpp"
#include "rulgp/gpc.hpp"
#include "rulgp/gpr.hpp"
#include "rulgp/harness.hpp"
#include "rulgp/keyvalue.hpp"
#include "rulgp/report.hpp"
#include "rulgp/simgen.hpp"

namespace fs = std::filesystem;
using namespace rulgp;

namespace {

// Raw flag text per config key; only flags given on the command line are
// applied over the config file.
struct FlagSet {
  std::map<std::string, std::string> text;
  std::map<std::string, bool> switches;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::string config_file;

  void option(CLI::App* app, const std::string& key, const std::string& help) {
    options.emplace_back(key, app->add_option("--" + key, text[key], help));
  }
  void flag(CLI::App* app, const std::string& key, const std::string& help) {
    options.emplace_back(key, app->add_flag("--" + key, switches[key], help));
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (const char* env = std::getenv("RULGP_OUT_DIR"); env && *env) cfg.out_dir = env;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      const auto sw = switches.find(key);
      cfg.set(key, sw != switches.end() ? (sw->second ? "true" : "false") : text.at(key));
    }
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
    return cfg;
  }
};

void common_flags(CLI::App* app, FlagSet& f) {
  app->add_option("--config", f.config_file, "Key-value run configuration file; flags override its entries");
  f.option(app, "out", "Output directory (default: $RULGP_OUT_DIR, else .)");
  f.option(app, "threads", "OpenMP threads (count; 0 = runtime default)");
}

void dataset_flags(CLI::App* app, FlagSet& f) {
  f.option(app, "manifest", "Dataset manifest (default: <out>/manifest.txt)");
  f.option(app, "chemistry", "Restrict to one chemistry: NCA, NCM, NCM+NCA or all");
}

void feature_flags(CLI::App* app, FlagSet& f) {
  f.option(app, "feature-set", "ECM, STATS, BENCHMARK, NOVEL_PRED, NOVEL_CLASS or RATE_CLASS (dashes allowed)");
  f.option(app, "reference", "Reference cycle n of the fixed window (cycle index; predictions for m > n)");
  f.option(app, "truncate", "Keep this many relaxation samples (count, >= 6) or 'full'");
}

void model_flags(CLI::App* app, FlagSet& f) {
  f.option(app, "seed", "Seed for GP restarts (integer)");
  f.option(app, "restarts", "GP hyperparameter restarts (count)");
}

void class_flags(CLI::App* app, FlagSet& f) {
  f.option(app, "test-cycle", "Centre of the classification window (cycle index)");
  f.option(app, "window", "Classification window width (cycles)");
  f.option(app, "upper", "Upper life threshold at SOH = 1 (cycles; default 450 NCA, 800 NCM)");
  f.option(app, "lower", "Lower life threshold at SOH = 1 (cycles; default 180 NCA, 200 NCM)");
  f.flag(app, "include-ncm-nca", "Include NCM+NCA cells in classification (thresholds as NCM)");
}

std::string fingerprint_of_run(const RunConfig& cfg, const std::string& command) {
  auto m = cfg.to_map();
  m["command"] = command;
  return fingerprint_of(m);
}

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw data_error("FileNotFound", "cannot write " + path.string());
  return out;
}

void write_run_preamble(std::ostream& out, const RunConfig& cfg, const std::string& command) {
  out << header_line(fingerprint_of_run(cfg, command)) << '\n';
  out << "# command = " << command << '\n';
  for (const auto& [k, v] : cfg.to_map()) out << "# " << k << " = " << v << '\n';
}

void report_written(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

Dataset load(const RunConfig& cfg) { return load_dataset(cfg.manifest_path()); }

std::vector<CellHistory> selected_cells(const Dataset& ds, const RunConfig& cfg) {
  std::vector<CellHistory> out;
  for (const auto& c : ds.cells) {
    if (!cfg.chemistry || c.chemistry == *cfg.chemistry) out.push_back(c);
  }
  if (out.empty()) throw data_error("InsufficientData", "no cells match the requested chemistry");
  return out;
}

DatasetSplit split_of(const Dataset& ds, const std::vector<CellHistory>& cells) {
  if (ds.manifest.split.empty()) {
    throw data_error("SchemaError", "manifest has no [split] section with per-condition train/test counts");
  }
  SplitSpec spec;
  std::set<std::string> present;
  for (const auto& c : cells) present.insert(c.condition);
  for (const auto& [cond, counts] : ds.manifest.split) {
    if (present.count(cond)) spec[cond] = counts;
  }
  return split_dataset(cells, spec, ds.manifest.split_seed);
}

void check_truncation(const RunConfig& cfg) {
  if (cfg.truncate && *cfg.truncate < kMinRelaxationSamples) {
    throw data_error("InsufficientData", "minimum " + std::to_string(kMinRelaxationSamples) +
                                             " relaxation samples, got " + std::to_string(*cfg.truncate));
  }
}

std::map<std::string, double> intervals(const std::vector<CellHistory>& cells) {
  std::map<std::string, double> out;
  for (const auto& c : cells) {
    if (!c.cycles.empty()) out.emplace(std::string(to_string(c.chemistry)), c.cycles.front().relaxation.sampling_interval);
  }
  return out;
}

// Subcommands.

int cmd_simulate(const RunConfig& cfg) {
  SimulationRecipe recipe = cfg.preset == "lifetime-classes"
                                ? SimulationRecipe::lifetime_classes(cfg.cells, cfg.seed)
                                : SimulationRecipe::standard(cfg.conditions, cfg.cells, cfg.seed);
  recipe.base.noise_sigma = cfg.noise_v;
  recipe.base.cell_spread = cfg.cell_spread;
  const Chemistry chem = cfg.chemistry.value_or(Chemistry::NCA);
  recipe.protocol = chem == Chemistry::NCM_NCA ? Protocol::ncm_nca_like() : Protocol::nca_like();
  recipe.protocol.chemistry = chem;
  const auto sim = simulate_dataset(recipe);
  const std::string header = header_line(fingerprint_of_run(cfg, "simulate")).substr(2);
  fs::create_directories(cfg.out_dir);
  for (const auto& cell : sim.cells) {
    auto out = open_output(cfg.out_dir / (cell.cell_id + ".csv"));
    write_cell_csv(out, cell, header);
  }
  auto out = open_output(cfg.out_dir / "manifest.txt");
  sim.manifest.write(out, header);
  std::cout << "wrote " << sim.cells.size() << " cells and " << (cfg.out_dir / "manifest.txt").string() << '\n';
  return 0;
}

int cmd_ingest(const RunConfig& cfg) {
  const Dataset ds = load(cfg);
  const fs::path target = cfg.out_dir / "manifest.txt";
  if (fs::exists(target) && fs::equivalent(target, cfg.manifest_path())) {
    throw usage_error("UsageError", "ingest would overwrite its own input; choose a different --out");
  }
  const std::string header = header_line(fingerprint_of_run(cfg, "ingest")).substr(2);
  Manifest m = ds.manifest;
  for (std::size_t i = 0; i < ds.cells.size(); ++i) {
    const auto& cell = ds.cells[i];
    auto out = open_output(cfg.out_dir / (cell.cell_id + ".csv"));
    write_cell_csv(out, cell, header);
    m.cells[i].file = cell.cell_id + ".csv";
  }
  auto mout = open_output(target);
  m.write(mout, header);
  auto sout = open_output(cfg.out_dir / "cells.csv");
  write_run_preamble(sout, cfg, "ingest");
  sout << "cell_id,chemistry,condition,cycles,eol_cycle,first_capacity_ah,last_capacity_ah\n";
  for (const auto& c : ds.cells) {
    sout << c.cell_id << ',' << to_string(c.chemistry) << ',' << c.condition << ',' << c.cycles.size() << ','
         << (c.eol_cycle ? std::to_string(*c.eol_cycle) : "") << ',' << format_exact(c.cycles.front().capacity) << ','
         << format_exact(c.cycles.back().capacity) << '\n';
  }
  std::cout << "ingested " << ds.cells.size() << " cells into " << cfg.out_dir.string() << '\n';
  return 0;
}

int cmd_fit_ecm(const RunConfig& cfg) {
  check_truncation(cfg);
  const Dataset ds = load(cfg);
  const auto cells = selected_cells(ds, cfg);
  auto out = open_output(cfg.out_dir / "ecm_fits.csv");
  write_run_preamble(out, cfg, "fit-ecm");
  out << "cell_id,chemistry,condition,cycle,ocv_v,r_o_ohm,r_e_ohm,c_e_f,r_c_ohm,c_c_f,tau_e_s,tau_c_s,"
         "residual_rms_v,converged,r_o_clamped\n";
  ExtractionOptions options;
  options.truncate = cfg.truncate;
  for (const auto& cell : cells) {
    const CellFeatures cf(cell, options, Execution::Parallel);
    for (const auto& rec : cell.cycles) {
      const auto& f = cf.ecm(rec.cycle_index);
      const auto& p = f.params;
      out << cell.cell_id << ',' << to_string(cell.chemistry) << ',' << cell.condition << ',' << rec.cycle_index << ','
          << format_exact(p.ocv) << ',' << format_exact(p.r_o) << ',' << format_exact(p.r_e) << ','
          << format_exact(p.c_e) << ',' << format_exact(p.r_c) << ',' << format_exact(p.c_c) << ','
          << format_exact(p.tau_e()) << ',' << format_exact(p.tau_c()) << ',' << format_exact(f.residual_rms) << ','
          << (f.converged ? 1 : 0) << ',' << (f.r_o_clamped ? 1 : 0) << '\n';
    }
  }
  std::cout << (cfg.out_dir / "ecm_fits.csv").string() << '\n';
  return 0;
}

int cmd_features(const RunConfig& cfg) {
  check_truncation(cfg);
  const Dataset ds = load(cfg);
  const auto cells = selected_cells(ds, cfg);
  const bool adjacent = is_classification_set(cfg.feature_set);
  const auto path = cfg.out_dir / ("features_" + std::string(to_string(cfg.feature_set)) + ".csv");
  auto out = open_output(path);
  write_run_preamble(out, cfg, "features");
  out << "cell_id,cycle,feature,value\n";
  ExtractionOptions options;
  options.truncate = cfg.truncate;
  for (const auto& cell : cells) {
    const CellFeatures cf(cell, options, Execution::Parallel);
    for (const auto& rec : cell.cycles) {
      const int m = rec.cycle_index;
      WindowSpec w = adjacent ? WindowSpec::adjacent(m) : WindowSpec::fixed(cfg.reference_cycle, m);
      if (w.reference < 1 || m <= w.reference || !cell.find_cycle(w.reference)) continue;
      const auto fv = cf.assemble(m, w, cfg.feature_set);
      for (std::size_t k = 0; k < fv.values.size(); ++k) {
        out << cell.cell_id << ',' << m << ',' << fv.names[k] << ',' << format_exact(fv.values[k]) << '\n';
      }
    }
  }
  std::cout << path.string() << '\n';
  return 0;
}

std::vector<Chemistry> chemistries(const std::vector<CellHistory>& cells) {
  std::set<Chemistry> s;
  for (const auto& c : cells) s.insert(c.chemistry);
  return {s.begin(), s.end()};
}

fs::path rul_model_path(const RunConfig& cfg, Chemistry chem) {
  return cfg.out_dir / ("rul_model_" + std::string(to_string(chem)) + ".txt");
}

fs::path class_model_path(const RunConfig& cfg, Chemistry chem) {
  return cfg.out_dir / ("class_model_" + std::string(to_string(chem)) + ".txt");
}

int cmd_train_rul(const RunConfig& cfg) {
  check_truncation(cfg);
  if (is_classification_set(cfg.feature_set)) {
    throw usage_error("UsageError", std::string(to_string(cfg.feature_set)) + " is a classification feature set");
  }
  const Dataset ds = load(cfg);
  const auto cells = selected_cells(ds, cfg);
  const auto split = split_of(ds, cells);
  ExtractionOptions options;
  options.truncate = cfg.truncate;
  const auto rc = cfg.rul_config();
  for (const Chemistry chem : chemistries(cells)) {
    std::vector<RulSample> train;
    for (const auto& c : cells) {
      if (c.chemistry != chem || !split.train.count(c.cell_id)) continue;
      const CellFeatures cf(c, options, Execution::Parallel);
      auto s = rul_samples(cf, cfg.feature_set, cfg.reference_cycle, cfg.train_stride);
      train.insert(train.end(), s.begin(), s.end());
    }
    GprModel model = train_rul_model(train, rc.gpr);
    model.metadata["chemistry"] = std::string(to_string(chem));
    model.metadata["reference_cycle"] = std::to_string(cfg.reference_cycle);
    model.metadata["truncate"] = cfg.truncate ? std::to_string(*cfg.truncate) : "full";
    model.metadata["fingerprint"] = fingerprint_of_run(cfg, "train-rul");
    model.metadata["version"] = kToolVersion;
    const auto path = rul_model_path(cfg, chem);
    auto out = open_output(path);
    out << header_line(model.metadata["fingerprint"]) << '\n';
    model.save(out);
    std::cout << path.string() << '\n';
  }
  return 0;
}

GprModel read_rul_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("FileNotFound", "cannot read " + path.string());
  std::string first;
  std::getline(in, first);
  if (first.rfind("#", 0) != 0) {
    in.seekg(0);
  }
  return GprModel::load(in);
}

LifeDag read_class_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("FileNotFound", "cannot read " + path.string());
  std::string first;
  std::getline(in, first);
  if (first.rfind("#", 0) != 0) in.seekg(0);
  return LifeDag::load(in);
}

std::string meta(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw data_error("SchemaError", "model file lacks metadata '" + key + "'");
  return it->second;
}

std::vector<std::pair<Chemistry, fs::path>> model_paths(const RunConfig& cfg, const std::vector<CellHistory>& cells,
                                                         bool classification) {
  std::vector<std::pair<Chemistry, fs::path>> out;
  if (cfg.model) {
    out.emplace_back(Chemistry::NCA, *cfg.model);  // chemistry read from metadata
    return out;
  }
  for (const Chemistry chem : chemistries(cells)) {
    const auto p = classification ? class_model_path(cfg, chem) : rul_model_path(cfg, chem);
    if (fs::exists(p)) out.emplace_back(chem, p);
  }
  if (out.empty()) throw data_error("FileNotFound", "no trained model found in " + cfg.out_dir.string());
  return out;
}

int cmd_predict_rul(const RunConfig& cfg) {
  const Dataset ds = load(cfg);
  const auto cells = selected_cells(ds, cfg);
  const auto split = split_of(ds, cells);
  ExperimentReport report;
  report.kind = "rul";
  report.config = cfg.to_map();
  report.config["command"] = "predict-rul";
  for (const auto& [unused, path] : model_paths(cfg, cells, false)) {
    const GprModel model = read_rul_model(path);
    const Chemistry chem = parse_chemistry(meta(model.metadata, "chemistry"));
    const FeatureSet set = parse_feature_set(meta(model.metadata, "feature_set"));
    const int reference = static_cast<int>(parse_integer(meta(model.metadata, "reference_cycle"), "reference_cycle"));
    const std::string trunc_text = meta(model.metadata, "truncate");
    ExtractionOptions options;
    if (trunc_text != "full") options.truncate = static_cast<std::size_t>(parse_integer(trunc_text, "truncate"));
    report.config["model." + std::string(to_string(chem))] = meta(model.metadata, "fingerprint");
    for (const auto& c : cells) {
      if (c.chemistry != chem || !split.test.count(c.cell_id)) continue;
      const CellFeatures cf(c, options, Execution::Parallel);
      const auto samples = rul_samples(cf, set, reference, 1);
      if (samples.empty()) continue;
      std::vector<FeatureVector> fv;
      for (const auto& s : samples) fv.push_back(s.features);
      const auto pred = model.predict(feature_matrix(fv), Execution::Parallel);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        RulPredictionRow r;
        r.feature_set = std::string(to_string(set));
        r.chemistry = std::string(to_string(chem));
        r.condition = c.condition;
        r.cell_id = c.cell_id;
        r.truncation = options.truncate.value_or(0);
        r.reference_cycle = reference;
        r.cycle = samples[i].features.cycle_index;
        r.soh = samples[i].soh;
        r.eol = samples[i].eol;
        r.rul = samples[i].rul;
        r.predicted = pred.mean(static_cast<Eigen::Index>(i));
        r.predicted_sd = std::sqrt(pred.variance(static_cast<Eigen::Index>(i)));
        report.predictions.push_back(std::move(r));
      }
    }
  }
  report.metrics = rul_metrics(report.predictions);
  ReportOptions ro;
  ro.plots = cfg.plots;
  report_written(write_report(cfg.out_dir / "predict-rul", report, ro));
  return 0;
}

int cmd_train_class(const RunConfig& cfg) {
  const Dataset ds = load(cfg);
  const auto cells = selected_cells(ds, cfg);
  const auto split = split_of(ds, cells);
  const auto cc = cfg.class_config();
  const int first = std::max(cc.test_cycle - cc.window_cycles / 2, 2);
  const int last = cc.test_cycle + cc.window_cycles / 2;
  bool trained = false;
  for (const Chemistry chem : chemistries(cells)) {
    if (chem == Chemistry::NCM_NCA && !cc.include_ncm_nca) continue;
    const ThresholdPolicy policy = cc.policy.value_or(ThresholdPolicy::for_chemistry(chem));
    std::vector<ClassSample> train;
    for (const auto& c : cells) {
      if (c.chemistry != chem || !split.train.count(c.cell_id)) continue;
      const CellFeatures cf(c, {}, Execution::Parallel);
      auto s = class_samples(cf, cfg.feature_set, first, last, policy, 1);
      train.insert(train.end(), s.begin(), s.end());
    }
    LifeDag dag = train_class_model(train, cc.gpc);
    dag.metadata["chemistry"] = std::string(to_string(chem));
    dag.metadata["first_cycle"] = std::to_string(first);
    dag.metadata["last_cycle"] = std::to_string(last);
    dag.metadata["threshold_upper"] = format_exact(policy.upper_at_soh1);
    dag.metadata["threshold_lower"] = format_exact(policy.lower_at_soh1);
    dag.metadata["fingerprint"] = fingerprint_of_run(cfg, "train-class");
    dag.metadata["version"] = kToolVersion;
    const auto path = class_model_path(cfg, chem);
    auto out = open_output(path);
    out << header_line(dag.metadata["fingerprint"]) << '\n';
    dag.save(out);
    std::cout << path.string() << '\n';
    trained = true;
  }
  if (!trained) throw usage_error("UsageError", "no chemistry left for classification (NCM+NCA is excluded by default)");
  return 0;
}

int cmd_classify(const RunConfig& cfg) {
  const Dataset ds = load(cfg);
  const auto cells = selected_cells(ds, cfg);
  const auto split = split_of(ds, cells);
  ExperimentReport report;
  report.kind = "classification";
  report.config = cfg.to_map();
  report.config["command"] = "classify";
  for (const auto& [unused, path] : model_paths(cfg, cells, true)) {
    const LifeDag dag = read_class_model(path);
    const Chemistry chem = parse_chemistry(meta(dag.metadata, "chemistry"));
    const FeatureSet set = parse_feature_set(meta(dag.metadata, "feature_set"));
    const int first = static_cast<int>(parse_integer(meta(dag.metadata, "first_cycle"), "first_cycle"));
    const int last = static_cast<int>(parse_integer(meta(dag.metadata, "last_cycle"), "last_cycle"));
    const ThresholdPolicy policy{parse_double(meta(dag.metadata, "threshold_upper"), "threshold_upper"),
                                 parse_double(meta(dag.metadata, "threshold_lower"), "threshold_lower")};
    report.config["model." + std::string(to_string(chem))] = meta(dag.metadata, "fingerprint");
    for (const auto& c : cells) {
      if (c.chemistry != chem || !split.test.count(c.cell_id)) continue;
      const CellFeatures cf(c, {}, Execution::Parallel);
      const auto samples = class_samples(cf, set, first, last, policy, 1);
      if (samples.empty()) continue;
      std::vector<FeatureVector> fv;
      for (const auto& s : samples) fv.push_back(s.features);
      const auto decisions = dag.classify(feature_matrix(fv));
      for (std::size_t i = 0; i < samples.size(); ++i) {
        ClassPredictionRow r;
        r.feature_set = std::string(to_string(set));
        r.chemistry = std::string(to_string(chem));
        r.condition = c.condition;
        r.cell_id = c.cell_id;
        r.cycle = samples[i].features.cycle_index;
        r.soh = samples[i].soh;
        r.rul = samples[i].rul;
        r.truth = samples[i].label;
        r.predicted = decisions[i].label;
        r.probability = decisions[i].probability;
        r.stage1_long = decisions[i].stage1_long;
        report.class_predictions.push_back(std::move(r));
      }
    }
  }
  report.accuracy = class_accuracy(report.class_predictions);
  report.confusion = class_confusion(report.class_predictions);
  ReportOptions ro;
  ro.plots = cfg.plots;
  report_written(write_report(cfg.out_dir / "classify", report, ro));
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  check_truncation(cfg);
  const Dataset ds = load(cfg);
  const auto cells = selected_cells(ds, cfg);
  const auto split = split_of(ds, cells);
  ExperimentReport report;
  if (cfg.study == "rul") {
    report = run_rul_experiment(cells, split, cfg.rul_config());
  } else if (cfg.study == "table-ii") {
    report = run_feature_comparison(cells, split, kTableIISets, cfg.rul_config());
  } else if (cfg.study == "truncation") {
    report = run_truncation_sweep(cells, split, cfg.rul_config(), cfg.truncation_counts);
  } else if (cfg.study == "start-sweep") {
    report = run_start_sweep(cells, split, cfg.rul_config(), cfg.start_cycles);
  } else if (cfg.study == "classification") {
    report = run_classification_experiment(cells, split, cfg.class_config());
  } else {  // table-iii
    const FeatureCache cache(cells, {});
    for (const auto set : kTableIIISets) {
      auto cc = cfg.class_config();
      cc.feature_set = set;
      auto part = run_classification_experiment(cells, split, cc, &cache);
      if (report.config.empty()) report = part;
      else report.append(part);
    }
    report.config["feature_set"] = "ECM,RATE_CLASS,BENCHMARK,NOVEL_CLASS";
  }
  for (const auto& [k, v] : cfg.to_map()) report.config["run." + k] = v;
  ReportOptions ro;
  ro.plots = cfg.plots;
  ro.interval_s_by_chemistry = intervals(cells);
  report_written(write_report(cfg.out_dir / ("evaluate-" + cfg.study), report, ro));
  return 0;
}

int cmd_report(const RunConfig& cfg) {
  if (!cfg.predictions && !cfg.class_predictions) {
    throw usage_error("UsageError", "report needs --predictions and/or --class-predictions");
  }
  ExperimentReport report;
  report.kind = cfg.predictions ? "rul" : "classification";
  report.config = cfg.to_map();
  report.config["command"] = "report";
  if (cfg.predictions) {
    std::ifstream in(*cfg.predictions);
    if (!in) throw data_error("FileNotFound", "cannot read " + cfg.predictions->string());
    report.predictions = read_rul_predictions_csv(in);
    report.metrics = rul_metrics(report.predictions);
  }
  if (cfg.class_predictions) {
    std::ifstream in(*cfg.class_predictions);
    if (!in) throw data_error("FileNotFound", "cannot read " + cfg.class_predictions->string());
    report.class_predictions = read_class_predictions_csv(in);
    report.accuracy = class_accuracy(report.class_predictions);
    report.confusion = class_confusion(report.class_predictions);
  }
  ReportOptions ro;
  ro.plots = cfg.plots;
  report_written(write_report(cfg.out_dir / "report", report, ro));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rulgp: battery remaining-useful-life prediction and lifetime classification from voltage relaxation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  struct Command {
    CLI::App* app;
    FlagSet flags;
    int (*run)(const RunConfig&);
  };
  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help, int (*run)(const RunConfig&)) -> Command& {
    commands.push_back(std::make_unique<Command>(Command{app.add_subcommand(name, help), {}, run}));
    auto& c = *commands.back();
    common_flags(c.app, c.flags);
    return c;
  };

  {
    auto& c = add("simulate", "Generate a synthetic dataset (cell CSVs and manifest.txt) into --out", cmd_simulate);
    c.flags.option(c.app, "cells", "Cells per condition (count)");
    c.flags.option(c.app, "conditions", "Operating conditions (count; standard preset)");
    c.flags.option(c.app, "seed", "Generator and split seed (integer)");
    c.flags.option(c.app, "preset", "standard or lifetime-classes");
    c.flags.option(c.app, "noise", "Relaxation voltage noise sigma (V)");
    c.flags.option(c.app, "spread", "Cell-to-cell parameter spread (relative, 0..1)");
    c.flags.option(c.app, "chemistry", "Chemistry label and protocol: NCA, NCM or NCM+NCA");
  }
  {
    auto& c = add("ingest", "Validate a dataset and write canonical CSVs, manifest and cells.csv into --out", cmd_ingest);
    dataset_flags(c.app, c.flags);
  }
  {
    auto& c = add("fit-ecm", "Fit the relaxation ECM to every cycle; writes ecm_fits.csv", cmd_fit_ecm);
    dataset_flags(c.app, c.flags);
    c.flags.option(c.app, "truncate", "Keep this many relaxation samples (count, >= 6) or 'full'");
  }
  {
    auto& c = add("features", "Extract one feature set for every cycle; writes features_<SET>.csv", cmd_features);
    dataset_flags(c.app, c.flags);
    feature_flags(c.app, c.flags);
  }
  {
    auto& c = add("train-rul", "Train one GPR per chemistry on the training split; writes rul_model_<CHEM>.txt",
                  cmd_train_rul);
    dataset_flags(c.app, c.flags);
    feature_flags(c.app, c.flags);
    model_flags(c.app, c.flags);
    c.flags.option(c.app, "train-stride", "Use every k-th training cycle (count)");
  }
  {
    auto& c = add("predict-rul", "Predict RUL (cycles) for the test split with trained models", cmd_predict_rul);
    dataset_flags(c.app, c.flags);
    c.flags.option(c.app, "model", "Model file (default: <out>/rul_model_<CHEM>.txt per chemistry)");
    c.flags.flag(c.app, "plots", "Also write SVG plots");
  }
  {
    auto& c = add("train-class", "Train the three-class life DAG per chemistry; writes class_model_<CHEM>.txt",
                  cmd_train_class);
    dataset_flags(c.app, c.flags);
    c.flags.option(c.app, "feature-set", "ECM, RATE_CLASS, BENCHMARK or NOVEL_CLASS (dashes allowed)");
    class_flags(c.app, c.flags);
    model_flags(c.app, c.flags);
  }
  {
    auto& c = add("classify", "Classify test-split cycles with trained DAG models", cmd_classify);
    dataset_flags(c.app, c.flags);
    c.flags.option(c.app, "model", "Model file (default: <out>/class_model_<CHEM>.txt per chemistry)");
    c.flags.flag(c.app, "plots", "Also write SVG plots");
  }
  {
    auto& c = add("evaluate", "Run an experiment end to end; writes tables into <out>/evaluate-<study>", cmd_evaluate);
    dataset_flags(c.app, c.flags);
    feature_flags(c.app, c.flags);
    model_flags(c.app, c.flags);
    class_flags(c.app, c.flags);
    c.flags.option(c.app, "study", "rul, table-ii, truncation, start-sweep, classification or table-iii");
    c.flags.option(c.app, "train-stride", "Use every k-th training cycle (count)");
    c.flags.option(c.app, "counts", "Truncation levels (comma-separated sample counts, 'full' allowed)");
    c.flags.option(c.app, "starts", "Reference cycles for the start sweep (comma-separated cycle indices)");
    c.flags.flag(c.app, "plots", "Also write SVG plots");
  }
  {
    auto& c = add("report", "Recompute metrics and tables from prediction CSVs into <out>/report", cmd_report);
    c.flags.option(c.app, "predictions", "RUL predictions CSV written by predict-rul or evaluate");
    c.flags.option(c.app, "class-predictions", "Class predictions CSV written by classify or evaluate");
    c.flags.flag(c.app, "plots", "Also write SVG plots");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorCategory::Usage);
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      return c->run(c->flags.resolve());
    } catch (const Error& e) {
      std::cerr << e.what() << '\n';
      return exit_code(e.category());
    } catch (const fs::filesystem_error& e) {
      std::cerr << "FileError: " << e.what() << '\n';
      return exit_code(ErrorCategory::Data);
    } catch (const std::exception& e) {
      std::cerr << "InternalError: " << e.what() << '\n';
      return exit_code(ErrorCategory::Numerical);
    }
  }
  return exit_code(ErrorCategory::Usage);
}
