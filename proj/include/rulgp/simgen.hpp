#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rulgp/dataset.hpp"
#include "rulgp/ecm.hpp"

namespace rulgp {

/// OCV drifts additively (V/cycle); the five R/C parameters drift linearly
/// in relative terms, p(m) = p(0) * (1 + rate * m).
struct DriftRates {
  double ocv = 0.0;
  double r_o = 0.0;
  double r_e = 0.0;
  double c_e = 0.0;
  double r_c = 0.0;
  double c_c = 0.0;
};

/// q(m) = q0 * (1 - a * (m / m_ref)^b)
struct FadeLaw {
  double a = 0.2;
  double b = 1.0;
  double m_ref = 500.0;

  double fraction(double cycle) const;
  /// Cycle at which the fade reaches `loss` (0.2 for 80 % SOH).
  double cycle_at_loss(double loss) const;
};

struct DriftProfile {
  EcmParams initial;
  DriftRates drift;
  FadeLaw fade;
  double noise_sigma = 0.0;  // V, i.i.d. on every relaxation sample
  // Per-cell uniform randomization in [1 - s, 1 + s] of the initial R/C
  // values, the drift rates and the fade amplitude. The OCV offset is spread
  // over s * 100 mV.
  double cell_spread = 0.0;
  std::uint64_t seed = 0;
};

struct Protocol {
  Chemistry chemistry = Chemistry::NCA;
  std::string condition = "CY25-0.5/1";
  double nominal_capacity = 3.5;       // Ah
  double relaxation_interval_s = 120;  // 2 min
  double rest_s = 1800;                // 30 min
  double charge_rate_c = 0.5;
  double discharge_rate_c = 1.0;
  double cutoff_rate_c = 0.05;
  double lower_cutoff_v = 2.65;
  double upper_cutoff_v = 4.2;
  double discharge_sample_s = 60;
  double cv_time_s = 1200;

  double cutoff_current() const { return cutoff_rate_c * nominal_capacity; }
  static Protocol nca_like();      // 2-min / 30-min rests
  static Protocol ncm_nca_like();  // 30-s / 60-min rests
};

/// Per-cell draw of a profile: spread applied once, `cell_spread` zeroed.
DriftProfile realize_cell_profile(const DriftProfile& profile);

/// Parameters after `cycle` cycles of drift. Throws DriftUnderflow when a
/// resistance or capacitance would become non-positive.
EcmParams drifted_params(const DriftProfile& realized, int cycle);

/// Pseudo-OCV discharge template on 1000 knots over the cutoff window,
/// indexed by depth of discharge x in [0, 1].
double discharge_template(const Protocol& protocol, double depth);

CellHistory simulate_cell(const DriftProfile& profile, const Protocol& protocol, int horizon,
                          const std::string& cell_id, double soh_eol = kDefaultSohEol);

/// Condition preset: scales the aging speed (fade and drift together) and
/// shifts the fresh-cell state.
struct ConditionPreset {
  std::string condition;
  double speed = 1.0;
  double fade_exponent = 1.0;
  double ocv_offset = 0.0;       // V
  double resistance_scale = 1.0;
};

std::vector<ConditionPreset> default_conditions(int count);
/// Three presets whose cells end life near 130, 300 and 700 cycles under
/// the default profile: short, medium and long life for the NCA threshold
/// policy (450 / 180).
std::vector<ConditionPreset> lifetime_class_conditions();

struct SimulationRecipe {
  DriftProfile base;
  Protocol protocol;
  std::vector<ConditionPreset> conditions;
  int cells_per_condition = 5;
  std::uint64_t seed = 7;
  int cycles_past_eol = 10;
  int max_cycles = 3000;

  static SimulationRecipe standard(int conditions, int cells_per_condition, std::uint64_t seed);
  /// standard() with lifetime_class_conditions().
  static SimulationRecipe lifetime_classes(int cells_per_condition, std::uint64_t seed);
  DriftProfile base_profile() const { return base; }
};

DriftProfile default_profile();

struct SimulatedDataset {
  Manifest manifest;  // cell file names `<cell_id>.csv`
  std::vector<CellHistory> cells;
};

SimulatedDataset simulate_dataset(const SimulationRecipe& recipe, Execution exec = Execution::Parallel);

}  // namespace rulgp
