#include "rulgp/config.hpp"

#include <algorithm>

#include "rulgp/errors.hpp"
#include "rulgp/keyvalue.hpp"

namespace rulgp {

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw usage_error("UsageError", key + ": expected true or false, got '" + value + "'");
}

long long parse_int(const std::string& key, const std::string& value, long long min) {
  long long v = 0;
  try {
    v = parse_integer(value, key);
  } catch (const Error&) {
    throw usage_error("UsageError", key + ": expected an integer, got '" + value + "'");
  }
  if (v < min) throw usage_error("UsageError", key + ": must be >= " + std::to_string(min));
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double(value, key);
  } catch (const Error&) {
    throw usage_error("UsageError", key + ": expected a number, got '" + value + "'");
  }
}

template <class T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "out",          "manifest",   "chemistry",    "feature-set", "study",         "reference", "truncate",
      "counts",       "starts",     "train-stride", "test-cycle",  "window",        "upper",     "lower",
      "include-ncm-nca", "seed",    "restarts",     "plots",       "cells",         "conditions", "preset",
      "noise",        "spread",     "model",        "predictions", "class-predictions", "threads"};
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value(trim(raw));
  if (key == "out") {
    out_dir = value;
  } else if (key == "manifest") {
    manifest = std::filesystem::path(value);
  } else if (key == "chemistry") {
    if (value == "all") {
      chemistry.reset();
    } else {
      try {
        chemistry = parse_chemistry(value);
      } catch (const Error&) {
        throw usage_error("UsageError", "chemistry: expected NCA, NCM, NCM+NCA or all, got '" + value + "'");
      }
    }
  } else if (key == "feature-set") {
    feature_set = parse_feature_set(value);
  } else if (key == "study") {
    static const std::vector<std::string> studies = {"rul",         "table-ii",       "truncation",
                                                     "start-sweep", "classification", "table-iii"};
    if (std::find(studies.begin(), studies.end(), value) == studies.end()) {
      throw usage_error("UsageError", "study: unknown study '" + value + "'");
    }
    study = value;
  } else if (key == "reference") {
    reference_cycle = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "truncate") {
    if (value == "full" || value.empty()) {
      truncate.reset();
    } else {
      truncate = static_cast<std::size_t>(parse_int(key, value, 0));
    }
  } else if (key == "counts") {
    truncation_counts.clear();
    for (const auto& part : split(value, ',')) {
      const std::string p(trim(part));
      truncation_counts.push_back(p == "full" ? 0 : static_cast<std::size_t>(parse_int(key, p, 0)));
    }
  } else if (key == "starts") {
    start_cycles.clear();
    for (const auto& part : split(value, ',')) start_cycles.push_back(static_cast<int>(parse_int(key, std::string(trim(part)), 1)));
  } else if (key == "train-stride") {
    train_stride = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "test-cycle") {
    test_cycle = static_cast<int>(parse_int(key, value, 2));
  } else if (key == "window") {
    window_cycles = static_cast<int>(parse_int(key, value, 0));
  } else if (key == "upper") {
    threshold_upper = parse_real(key, value);
  } else if (key == "lower") {
    threshold_lower = parse_real(key, value);
  } else if (key == "include-ncm-nca") {
    include_ncm_nca = parse_bool(key, value);
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_int(key, value, 0));
  } else if (key == "restarts") {
    restarts = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "plots") {
    plots = parse_bool(key, value);
  } else if (key == "cells") {
    cells = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "conditions") {
    conditions = static_cast<int>(parse_int(key, value, 1));
  } else if (key == "preset") {
    if (value != "standard" && value != "lifetime-classes") {
      throw usage_error("UsageError", "preset: expected standard or lifetime-classes, got '" + value + "'");
    }
    preset = value;
  } else if (key == "noise") {
    noise_v = parse_real(key, value);
    if (noise_v < 0.0) throw usage_error("UsageError", "noise: must be >= 0");
  } else if (key == "spread") {
    cell_spread = parse_real(key, value);
    if (cell_spread < 0.0 || cell_spread >= 1.0) throw usage_error("UsageError", "spread: must be in [0, 1)");
  } else if (key == "model") {
    model = std::filesystem::path(value);
  } else if (key == "predictions") {
    predictions = std::filesystem::path(value);
  } else if (key == "class-predictions") {
    class_predictions = std::filesystem::path(value);
  } else if (key == "threads") {
    threads = static_cast<int>(parse_int(key, value, 0));
  } else {
    throw usage_error("UsageError", "unknown configuration key '" + key + "'");
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  const auto file = KeyValueFile::load(path);
  for (const auto& [k, v] : file.global().entries) set(k, v);
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["out"] = out_dir.string();
  m["manifest"] = manifest_path().string();
  m["chemistry"] = chemistry ? std::string(to_string(*chemistry)) : "all";
  m["feature-set"] = std::string(to_string(feature_set));
  m["study"] = study;
  m["reference"] = std::to_string(reference_cycle);
  m["truncate"] = truncate ? std::to_string(*truncate) : "full";
  m["counts"] = join_list(truncation_counts);
  m["starts"] = join_list(start_cycles);
  m["train-stride"] = std::to_string(train_stride);
  m["test-cycle"] = std::to_string(test_cycle);
  m["window"] = std::to_string(window_cycles);
  m["upper"] = threshold_upper ? format_exact(*threshold_upper) : "default";
  m["lower"] = threshold_lower ? format_exact(*threshold_lower) : "default";
  m["include-ncm-nca"] = include_ncm_nca ? "true" : "false";
  m["seed"] = std::to_string(seed);
  m["restarts"] = std::to_string(restarts);
  m["plots"] = plots ? "true" : "false";
  m["cells"] = std::to_string(cells);
  m["conditions"] = std::to_string(conditions);
  m["preset"] = preset;
  m["noise"] = format_exact(noise_v);
  m["spread"] = format_exact(cell_spread);
  if (model) m["model"] = model->string();
  if (predictions) m["predictions"] = predictions->string();
  if (class_predictions) m["class-predictions"] = class_predictions->string();
  return m;
}

std::optional<ThresholdPolicy> RunConfig::policy() const {
  if (!threshold_upper && !threshold_lower) return std::nullopt;
  if (!threshold_upper || !threshold_lower) {
    throw usage_error("UsageError", "set both --upper and --lower, or neither");
  }
  ThresholdPolicy p{*threshold_upper, *threshold_lower};
  p.validate();
  return p;
}

RulExperimentConfig RunConfig::rul_config() const {
  RulExperimentConfig c;
  c.feature_set = feature_set;
  c.reference_cycle = reference_cycle;
  c.truncate = truncate;
  c.train_stride = train_stride;
  c.gpr.restarts = restarts;
  c.gpr.seed = seed;
  return c;
}

ClassificationConfig RunConfig::class_config() const {
  ClassificationConfig c;
  c.feature_set = feature_set;
  c.test_cycle = test_cycle;
  c.window_cycles = window_cycles;
  c.policy = policy();
  c.include_ncm_nca = include_ncm_nca;
  c.gpc.seed = seed;
  return c;
}

}  // namespace rulgp
