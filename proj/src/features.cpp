#include "rulgp/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "rulgp/errors.hpp"
#include "rulgp/kernels.hpp"

namespace rulgp {

namespace {

const std::vector<std::string> kEcmNames = {"ocv", "r_o", "r_e", "c_e", "r_c", "c_c"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void push_ecm(std::vector<double>& out, const EcmParams& p) {
  out.insert(out.end(), {p.ocv, p.r_o, p.r_e, p.c_e, p.r_c, p.c_c});
}

const RelaxationCurve& maybe_truncated(const RelaxationCurve& curve, const ExtractionOptions& opt,
                                       RelaxationCurve& storage) {
  if (!opt.truncate) return curve;
  storage = curve.truncated(*opt.truncate);
  return storage;
}

// Voltage-ascending knots of Q(V) from a discharge whose voltage is taken as
// its running minimum, so that Q is a function of V.
struct QofV {
  std::vector<double> v, q;
};

QofV monotone_q_of_v(const DischargeCurve& c) {
  QofV out;
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.v.size(); ++k) {
    if (c.v[k] < running) {
      running = c.v[k];
      out.v.push_back(c.v[k]);
      out.q.push_back(c.q[k]);
    }
  }
  std::reverse(out.v.begin(), out.v.end());
  std::reverse(out.q.begin(), out.q.end());
  return out;
}

double eval_q(const QofV& f, double voltage) {
  if (voltage <= f.v.front()) return f.q.front();
  if (voltage >= f.v.back()) return f.q.back();
  auto hi = std::upper_bound(f.v.begin(), f.v.end(), voltage);
  const auto k = static_cast<std::size_t>(hi - f.v.begin()) - 1;
  return f.q[k] + (f.q[k + 1] - f.q[k]) * (voltage - f.v[k]) / (f.v[k + 1] - f.v[k]);
}

void require_discharge(const CycleRecord& rec, const std::string& cell) {
  if (!rec.discharge) {
    throw data_error("MissingDischargeData", "cell " + cell + " cycle " + std::to_string(rec.cycle_index) +
                                                 " has no discharge curve");
  }
}

}  // namespace

std::string_view to_string(FeatureSet set) {
  switch (set) {
    case FeatureSet::ECM:
      return "ECM";
    case FeatureSet::STATS:
      return "STATS";
    case FeatureSet::BENCHMARK:
      return "BENCHMARK";
    case FeatureSet::NOVEL_PRED:
      return "NOVEL_PRED";
    case FeatureSet::NOVEL_CLASS:
      return "NOVEL_CLASS";
    case FeatureSet::RATE_CLASS:
      return "RATE_CLASS";
  }
  return "?";
}

FeatureSet parse_feature_set(std::string_view text) {
  std::string key(text);
  for (auto& ch : key) ch = ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (auto s : {FeatureSet::ECM, FeatureSet::STATS, FeatureSet::BENCHMARK, FeatureSet::NOVEL_PRED,
                 FeatureSet::NOVEL_CLASS, FeatureSet::RATE_CLASS}) {
    if (key == to_string(s)) return s;
  }
  throw usage_error("UsageError", "unknown feature set '" + std::string(text) + "'");
}

const std::vector<std::string>& feature_names(FeatureSet set) {
  static const std::vector<std::string> ecm = kEcmNames;
  static const std::vector<std::string> stats = {"dv_var", "dv_skew", "dv_kurt", "dv_max",
                                                 "dv_min", "dv_mean", "sum_dv",  "last_dv"};
  static const std::vector<std::string> bench = concat(kEcmNames, {"sum_ah", "sum_t"});
  static const std::vector<std::string> pred = concat(kEcmNames, {"sum_dv", "last_dv"});
  static const std::vector<std::string> novel_class = concat(kEcmNames, {"var_dq", "delta_t"});
  static const std::vector<std::string> rate_class = {"var_dq", "delta_t"};
  switch (set) {
    case FeatureSet::ECM:
      return ecm;
    case FeatureSet::STATS:
      return stats;
    case FeatureSet::BENCHMARK:
      return bench;
    case FeatureSet::NOVEL_PRED:
      return pred;
    case FeatureSet::NOVEL_CLASS:
      return novel_class;
    case FeatureSet::RATE_CLASS:
      return rate_class;
  }
  return ecm;
}

bool is_classification_set(FeatureSet set) { return set == FeatureSet::NOVEL_CLASS || set == FeatureSet::RATE_CLASS; }

double FeatureVector::value(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return values[k];
  }
  throw usage_error("UnknownFeature", "feature vector has no '" + std::string(name) + "'");
}

void WindowSpec::validate() const {
  if (reference < 1 || current <= reference) {
    throw usage_error("InvalidWindow", "window needs 1 <= n < m, got n = " + std::to_string(reference) +
                                           ", m = " + std::to_string(current));
  }
  if (mode == WindowMode::Adjacent && current - reference != 1) {
    throw usage_error("InvalidWindow", "adjacent window requires m - n = 1");
  }
}

std::vector<double> delta_v(const RelaxationCurve& curve_m, const RelaxationCurve& curve_n) {
  if (curve_m.t != curve_n.t) {
    throw data_error("TimeGridMismatch", "relaxation curves are sampled on different time grids");
  }
  std::vector<double> dv(curve_m.size());
  for (std::size_t k = 0; k < dv.size(); ++k) dv[k] = curve_m.v[k] - curve_n.v[k];
  return dv;
}

DeltaVSummary delta_v_features(std::span<const double> dv, double dt, double horizon) {
  if (!(dt > 0.0)) throw usage_error("UsageError", "sampling interval must be positive");
  const auto last = static_cast<std::size_t>(std::llround(horizon / dt));
  if (dv.empty() || last >= dv.size()) {
    throw data_error("HorizonExceedsData", "horizon " + format_exact(horizon) + " s needs " +
                                               std::to_string(last + 1) + " samples, have " +
                                               std::to_string(dv.size()));
  }
  DeltaVSummary out;
  for (std::size_t k = 1; k <= last; ++k) out.sum_dv += dv[k];
  out.last_dv = dv[last];
  return out;
}

StatsFeatures stats_features(std::span<const double> dv) {
  if (dv.size() < 2) throw data_error("InsufficientData", "statistics need at least 2 points");
  const auto n = static_cast<double>(dv.size());
  const double mean = std::accumulate(dv.begin(), dv.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : dv) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  StatsFeatures out;
  const double var_sample = m2 / (n - 1.0);
  m2 /= n;
  m3 /= n;
  m4 /= n;
  double skew = 0.0, kurt = 0.0;
  if (m2 > 0.0) {
    skew = m3 / std::pow(m2, 1.5);
    kurt = m4 / (m2 * m2);
  } else {
    out.degenerate = true;
  }
  const auto [mn, mx] = std::minmax_element(dv.begin(), dv.end());
  double sum = 0.0;
  for (std::size_t k = 1; k < dv.size(); ++k) sum += dv[k];
  out.values = {var_sample, skew, kurt, *mx, *mn, mean, sum, dv.back()};
  return out;
}

double capacity_at_voltage(const DischargeCurve& curve, double voltage) {
  return eval_q(monotone_q_of_v(curve), voltage);
}

double delta_q_variance(const DischargeCurve& disc_m, const DischargeCurve& disc_n, std::size_t grid_points) {
  if (grid_points < 2) throw usage_error("UsageError", "voltage grid needs at least 2 points");
  const QofV qm = monotone_q_of_v(disc_m), qn = monotone_q_of_v(disc_n);
  if (qm.v.size() < 2 || qn.v.size() < 2) throw data_error("NoVoltageOverlap", "discharge voltage range is empty");
  const double lo = std::max(qm.v.front(), qn.v.front());
  const double hi = std::min(qm.v.back(), qn.v.back());
  if (!(hi > lo)) throw data_error("NoVoltageOverlap", "discharge curves do not overlap in voltage");
  const auto p = static_cast<double>(grid_points);
  std::vector<double> dq(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double v = lo + (hi - lo) * static_cast<double>(i) / (p - 1.0);
    dq[i] = eval_q(qm, v) - eval_q(qn, v);
  }
  const double mean = std::accumulate(dq.begin(), dq.end(), 0.0) / p;
  double ss = 0.0;
  for (double x : dq) ss += (x - mean) * (x - mean);
  return std::log10(std::max(ss / (p - 1.0), kDeltaQVarianceFloor));
}

double delta_t(const DischargeCurve& disc_m, const DischargeCurve& disc_n) {
  if (!(disc_m.duration() > 0.0 && disc_n.duration() > 0.0)) {
    throw data_error("ValidationError", "discharge durations must be positive");
  }
  return std::log10(std::max(std::fabs(disc_m.duration() - disc_n.duration()), kDeltaTFloor));
}

Throughput benchmark_features(const CellHistory& history, int cycle) {
  const auto& rec = history.cycle(cycle);
  return {rec.cumulative_ah, rec.calendar_days};
}

namespace {

FeatureVector assemble_impl(const CellHistory& h, int cycle, const WindowSpec& window, FeatureSet set,
                            const ExtractionOptions& opt, const FitReport& fit_m) {
  if (set != FeatureSet::ECM) {
    window.validate();
    if (window.current != cycle) {
      throw usage_error("InvalidWindow", "window ends at cycle " + std::to_string(window.current) +
                                             ", features requested for " + std::to_string(cycle));
    }
    if (is_classification_set(set) && window.mode != WindowMode::Adjacent) {
      throw usage_error("InvalidWindow", "classification features need an adjacent (m - n = 1) window");
    }
  }
  const auto& rec_m = h.cycle(cycle);
  FeatureVector fv;
  fv.cell_id = h.cell_id;
  fv.cycle_index = cycle;
  fv.set = set;
  fv.names = feature_names(set);

  auto relax_delta = [&]() {
    const auto& rec_n = h.cycle(window.reference);
    RelaxationCurve sm, sn;
    const auto& cm = maybe_truncated(rec_m.relaxation, opt, sm);
    const auto& cn = maybe_truncated(rec_n.relaxation, opt, sn);
    return std::make_pair(delta_v(cm, cn), cm.sampling_interval > 0.0 ? cm.sampling_interval : cm.t[1]);
  };

  switch (set) {
    case FeatureSet::ECM:
      push_ecm(fv.values, fit_m.params);
      break;
    case FeatureSet::STATS: {
      const auto [dv, dt] = relax_delta();
      const auto s = stats_features(dv);
      fv.values.assign(s.values.begin(), s.values.end());
      break;
    }
    case FeatureSet::BENCHMARK: {
      push_ecm(fv.values, fit_m.params);
      const auto tp = benchmark_features(h, cycle);
      fv.values.push_back(tp.sum_ah);
      fv.values.push_back(tp.sum_days);
      break;
    }
    case FeatureSet::NOVEL_PRED: {
      push_ecm(fv.values, fit_m.params);
      const auto [dv, dt] = relax_delta();
      const auto s = delta_v_features(dv, dt, static_cast<double>(dv.size() - 1) * dt);
      fv.values.push_back(s.sum_dv);
      fv.values.push_back(s.last_dv);
      break;
    }
    case FeatureSet::NOVEL_CLASS:
    case FeatureSet::RATE_CLASS: {
      const auto& rec_n = h.cycle(window.reference);
      require_discharge(rec_m, h.cell_id);
      require_discharge(rec_n, h.cell_id);
      if (set == FeatureSet::NOVEL_CLASS) push_ecm(fv.values, fit_m.params);
      fv.values.push_back(delta_q_variance(*rec_m.discharge, *rec_n.discharge, opt.dq_grid_points));
      fv.values.push_back(delta_t(*rec_m.discharge, *rec_n.discharge));
      break;
    }
  }
  for (double x : fv.values) {
    if (!std::isfinite(x)) {
      throw numerical_error("NonFiniteFeature", "cell " + h.cell_id + " cycle " + std::to_string(cycle));
    }
  }
  return fv;
}

bool needs_ecm(FeatureSet set) { return set != FeatureSet::STATS && set != FeatureSet::RATE_CLASS; }

}  // namespace

CellFeatures::CellFeatures(const CellHistory& history, ExtractionOptions options, Execution exec)
    : history_(&history), options_(options) {
  std::vector<RelaxationCurve> curves;
  curves.reserve(history.cycles.size());
  for (const auto& rec : history.cycles) {
    curves.push_back(options_.truncate ? rec.relaxation.truncated(*options_.truncate) : rec.relaxation);
  }
  fits_ = kernels::fit_ecm_batch(curves, exec);
}

const FitReport& CellFeatures::ecm(int cycle) const {
  const auto* rec = history_->find_cycle(cycle);
  if (!rec) throw data_error("UnknownCycle", "cell " + history_->cell_id + " has no cycle " + std::to_string(cycle));
  return fits_[static_cast<std::size_t>(rec - history_->cycles.data())];
}

FeatureVector CellFeatures::assemble(int cycle, const WindowSpec& window, FeatureSet set) const {
  return assemble_impl(*history_, cycle, window, set, options_, ecm(cycle));
}

FeatureVector assemble(const CellHistory& history, int cycle, const WindowSpec& window, FeatureSet set,
                       const ExtractionOptions& options) {
  FitReport fit;
  if (needs_ecm(set)) {
    RelaxationCurve storage;
    fit = fit_ecm(maybe_truncated(history.cycle(cycle).relaxation, options, storage));
  }
  return assemble_impl(history, cycle, window, set, options, fit);
}

}  // namespace rulgp
