#include <algorithm>
#include <cstdio>
#include "rulgp/simgen.hpp"

#include <array>
#include <cmath>
#include <random>

#include "rulgp/errors.hpp"

namespace rulgp {

namespace {

constexpr int kTemplateKnots = 1000;

// Uniform in [-1, 1) from the top 53 bits; stable across standard libraries.
double symmetric_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double relative(double base, double rate, int cycle, const char* name) {
  const double factor = 1.0 + rate * cycle;
  if (!(factor > 0.0)) {
    throw data_error("DriftUnderflow", std::string(name) + " becomes non-positive at cycle " + std::to_string(cycle));
  }
  return base * factor;
}

}  // namespace

double FadeLaw::fraction(double cycle) const { return a * std::pow(cycle / m_ref, b); }

double FadeLaw::cycle_at_loss(double loss) const { return m_ref * std::pow(loss / a, 1.0 / b); }

Protocol Protocol::nca_like() { return Protocol{}; }

Protocol Protocol::ncm_nca_like() {
  Protocol p;
  p.chemistry = Chemistry::NCM_NCA;
  p.nominal_capacity = 2.5;
  p.relaxation_interval_s = 30;
  p.rest_s = 3600;
  p.lower_cutoff_v = 2.5;
  return p;
}

DriftProfile default_profile() {
  DriftProfile p;
  p.initial = EcmParams{4.16, 0.03, 0.015, 200.0 / 0.015, 0.03, 900.0 / 0.03};
  p.drift = DriftRates{-2e-5, 1e-3, 1.5e-3, -5e-4, 2e-3, -6e-4};
  p.fade = FadeLaw{0.2, 1.0, 500.0};
  return p;
}

DriftProfile realize_cell_profile(const DriftProfile& profile) {
  DriftProfile out = profile;
  out.cell_spread = 0.0;
  const double s = profile.cell_spread;
  if (s == 0.0) return out;
  std::mt19937_64 rng(mix(profile.seed, 0x5eed));
  auto scale = [&](double& x) { x *= 1.0 + s * symmetric_unit(rng); };
  out.initial.ocv += 0.1 * s * symmetric_unit(rng);
  scale(out.initial.r_o);
  scale(out.initial.r_e);
  scale(out.initial.c_e);
  scale(out.initial.r_c);
  scale(out.initial.c_c);
  scale(out.drift.ocv);
  scale(out.drift.r_o);
  scale(out.drift.r_e);
  scale(out.drift.c_e);
  scale(out.drift.r_c);
  scale(out.drift.c_c);
  scale(out.fade.a);
  return out;
}

EcmParams drifted_params(const DriftProfile& p, int cycle) {
  EcmParams out;
  out.ocv = p.initial.ocv + p.drift.ocv * cycle;
  out.r_o = relative(p.initial.r_o, p.drift.r_o, cycle, "R_o");
  out.r_e = relative(p.initial.r_e, p.drift.r_e, cycle, "R_e");
  out.c_e = relative(p.initial.c_e, p.drift.c_e, cycle, "C_e");
  out.r_c = relative(p.initial.r_c, p.drift.r_c, cycle, "R_c");
  out.c_c = relative(p.initial.c_c, p.drift.c_c, cycle, "C_c");
  return out;
}

double discharge_template(const Protocol& protocol, double depth) {
  // Knot values of a monotone state-of-charge curve h(s) = 0.6 s + 0.4 (1 - (1 - s)^4).
  static const std::array<double, kTemplateKnots> knots = [] {
    std::array<double, kTemplateKnots> k{};
    for (int j = 0; j < kTemplateKnots; ++j) {
      const double s = 1.0 - static_cast<double>(j) / (kTemplateKnots - 1);
      k[static_cast<std::size_t>(j)] = 0.6 * s + 0.4 * (1.0 - std::pow(1.0 - s, 4));
    }
    return k;
  }();
  depth = std::clamp(depth, 0.0, 1.0);
  const double pos = depth * (kTemplateKnots - 1);
  const auto j = std::min(static_cast<std::size_t>(pos), static_cast<std::size_t>(kTemplateKnots - 2));
  const double w = pos - static_cast<double>(j);
  const double h = knots[j] + (knots[j + 1] - knots[j]) * w;
  return protocol.lower_cutoff_v + (protocol.upper_cutoff_v - protocol.lower_cutoff_v) * h;
}

CellHistory simulate_cell(const DriftProfile& profile, const Protocol& protocol, int horizon,
                          const std::string& cell_id, double soh_eol) {
  if (horizon < 1) throw usage_error("UsageError", "horizon must be at least one cycle");
  if (!(profile.fade.a > 0.0 && profile.fade.b > 0.0)) throw usage_error("UsageError", "fade law needs a, b > 0");
  const DriftProfile cell = realize_cell_profile(profile);
  drifted_params(cell, horizon);  // rejects underflow before any work
  if (cell.fade.fraction(horizon) >= 1.0) {
    throw data_error("DriftUnderflow", "capacity reaches zero before cycle " + std::to_string(horizon));
  }

  std::mt19937_64 noise_rng(mix(profile.seed, 0x0153));
  std::normal_distribution<double> noise(0.0, 1.0);

  CellHistory h;
  h.cell_id = cell_id;
  h.chemistry = protocol.chemistry;
  h.condition = protocol.condition;
  h.nominal_capacity = protocol.nominal_capacity;
  const double cutoff = -protocol.cutoff_current();
  const auto rest_samples = static_cast<int>(std::floor(protocol.rest_s / protocol.relaxation_interval_s + 1e-9)) + 1;
  const double i_dis = protocol.discharge_rate_c * protocol.nominal_capacity;
  const double i_ch = protocol.charge_rate_c * protocol.nominal_capacity;

  h.cycles.reserve(static_cast<std::size_t>(horizon));
  for (int m = 1; m <= horizon; ++m) {
    const EcmParams p = drifted_params(cell, m);
    CycleRecord rec;
    rec.cycle_index = m;
    auto& relax = rec.relaxation;
    relax.sampling_interval = protocol.relaxation_interval_s;
    relax.cutoff_current = cutoff;
    for (int k = 0; k < rest_samples; ++k) {
      const double t = k * protocol.relaxation_interval_s;
      double v = predict_relaxation(p, cutoff, t);
      if (cell.noise_sigma > 0.0) v += cell.noise_sigma * noise(noise_rng);
      relax.t.push_back(t);
      relax.v.push_back(v);
    }

    const double capacity = protocol.nominal_capacity * (1.0 - cell.fade.fraction(m));
    DischargeCurve d;
    d.current = i_dis;
    const double t_end = capacity / i_dis * 3600.0;
    for (int j = 0; j * protocol.discharge_sample_s < t_end; ++j) {
      const double t = j * protocol.discharge_sample_s;
      const double q = i_dis * t / 3600.0;
      d.t.push_back(t);
      d.q.push_back(q);
      d.v.push_back(discharge_template(protocol, q / capacity));
    }
    d.t.push_back(t_end);
    d.q.push_back(capacity);
    d.v.push_back(discharge_template(protocol, 1.0));

    rec.discharge = std::move(d);
    rec.capacity = capacity;
    rec.charge_ah = capacity;
    rec.charge_duration_s = capacity / i_ch * 3600.0 + protocol.cv_time_s;
    rec.rest_after_discharge_s = protocol.rest_s;
    h.cycles.push_back(std::move(rec));
  }
  finalize_history(h, soh_eol);
  return h;
}

std::vector<ConditionPreset> default_conditions(int count) {
  // Temperature sets both the aging speed and the fresh-cell resistance.
  static const ConditionPreset base[] = {
      {"CY25-0.5/1", 1.6, 1.0, 0.000, 1.25},
      {"CY35-0.5/1", 0.8, 1.0, 0.006, 0.95},
      {"CY45-0.5/1", 1.1, 1.0, -0.006, 0.80},
      {"CY25-0.25/1", 1.3, 1.0, 0.003, 1.10},
  };
  std::vector<ConditionPreset> out;
  for (int k = 0; k < count; ++k) {
    ConditionPreset c = base[k % 4];
    if (k >= 4) {
      c.condition = "CY" + std::to_string(20 + 5 * k) + "-0.5/1";
      c.speed *= 1.0 + 0.1 * (k / 4);
    }
    out.push_back(c);
  }
  return out;
}

std::vector<ConditionPreset> lifetime_class_conditions() {
  return {
      {"SHORT-LIFE", 3.8, 1.0, 0.000, 1.25},
      {"MEDIUM-LIFE", 1.67, 1.0, 0.004, 1.00},
      {"LONG-LIFE", 0.71, 1.0, -0.004, 0.85},
  };
}

SimulationRecipe SimulationRecipe::lifetime_classes(int cells_per_condition, std::uint64_t seed) {
  SimulationRecipe r = standard(3, cells_per_condition, seed);
  r.conditions = lifetime_class_conditions();
  return r;
}

SimulationRecipe SimulationRecipe::standard(int conditions, int cells_per_condition, std::uint64_t seed) {
  if (conditions < 1 || cells_per_condition < 1) {
    throw usage_error("UsageError", "need at least one condition and one cell");
  }
  SimulationRecipe r;
  r.base = default_profile();
  r.base.cell_spread = 0.1;
  r.protocol = Protocol::nca_like();
  r.conditions = default_conditions(conditions);
  r.cells_per_condition = cells_per_condition;
  r.seed = seed;
  return r;
}

SimulatedDataset simulate_dataset(const SimulationRecipe& recipe, Execution exec) {
  struct Job {
    DriftProfile profile;
    Protocol protocol;
    std::string id;
    int horizon;
  };
  std::vector<Job> jobs;
  SimulatedDataset out;
  out.manifest.split_seed = recipe.seed;
  for (std::size_t ci = 0; ci < recipe.conditions.size(); ++ci) {
    const auto& preset = recipe.conditions[ci];
    for (int k = 0; k < recipe.cells_per_condition; ++k) {
      Job job;
      job.profile = recipe.base;
      job.profile.seed = mix(recipe.seed, mix(ci, static_cast<std::uint64_t>(k)));
      auto& d = job.profile.drift;
      d.ocv *= preset.speed;
      d.r_o *= preset.speed;
      d.r_e *= preset.speed;
      d.c_e *= preset.speed;
      d.r_c *= preset.speed;
      d.c_c *= preset.speed;
      job.profile.fade.a *= preset.speed;
      job.profile.fade.b = preset.fade_exponent;
      job.profile.initial.ocv += preset.ocv_offset;
      job.profile.initial.r_o *= preset.resistance_scale;
      job.profile.initial.r_e *= preset.resistance_scale;
      job.profile.initial.r_c *= preset.resistance_scale;
      job.protocol = recipe.protocol;
      job.protocol.condition = preset.condition;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_C%zu_%02d", std::string(to_string(recipe.protocol.chemistry)).c_str(), ci + 1, k + 1);
      job.id = id;
      // Fade in the realized profile decides where EOL falls.
      const auto realized = realize_cell_profile(job.profile);
      const double eol = realized.fade.cycle_at_loss(1.0 - kDefaultSohEol);
      job.horizon = std::min(recipe.max_cycles, static_cast<int>(std::ceil(eol)) + recipe.cycles_past_eol);
      jobs.push_back(std::move(job));

      CellEntry e;
      e.cell_id = jobs.back().id;
      e.file = e.cell_id + ".csv";
      e.chemistry = recipe.protocol.chemistry;
      e.condition = preset.condition;
      e.nominal_capacity = recipe.protocol.nominal_capacity;
      e.relaxation_interval_s = recipe.protocol.relaxation_interval_s;
      e.rest_duration_s = recipe.protocol.rest_s;
      e.cutoff_current_a = recipe.protocol.cutoff_current();
      out.manifest.cells.push_back(std::move(e));
    }
    const int n = recipe.cells_per_condition;
    out.manifest.split[preset.condition] = {n - n / 2, n / 2};
  }
  out.cells.resize(jobs.size());
  for_each_index(jobs.size(), exec, [&](std::size_t k) {
    out.cells[k] = simulate_cell(jobs[k].profile, jobs[k].protocol, jobs[k].horizon, jobs[k].id);
  });
  return out;
}

}  // namespace rulgp
