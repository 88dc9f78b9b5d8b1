#pragma once

#include <span>
#include <vector>

#include "rulgp/dataset.hpp"

namespace rulgp {

/// Second-order equivalent-circuit parameters. Resistances in ohm,
/// capacitances in farad, OCV in volt.
struct EcmParams {
  double ocv = 0.0;
  double r_o = 0.0;
  double r_e = 0.0;
  double c_e = 0.0;
  double r_c = 0.0;
  double c_c = 0.0;

  double tau_e() const { return r_e * c_e; }
  double tau_c() const { return r_c * c_c; }
  bool operator==(const EcmParams&) const = default;
};

/// Relaxation voltage of the two-RC model after the current steps from I to 0
/// at t = 0. The ohmic drop I*R_o only appears in the t = 0 sample.
double predict_relaxation(const EcmParams& p, double cutoff_current, double t);
std::vector<double> predict_relaxation(const EcmParams& p, double cutoff_current, std::span<const double> times);

inline constexpr std::size_t kMinRelaxationSamples = 6;

struct EcmFitOptions {
  int max_iterations = 200;
  double relative_cost_tol = 1e-10;
  double step_tol = 1e-12;
};

struct FitReport {
  EcmParams params;
  double residual_rms = 0.0;  // V, over the t > 0 samples
  int iterations = 0;         // summed over all starts
  bool converged = false;
  bool r_o_clamped = false;
};

/// Starting points of the multi-start search (R_o not yet identified).
std::vector<EcmParams> ecm_initial_guesses(const RelaxationCurve& curve);

/// RMS misfit of the t > 0 samples.
double relaxation_residual_rms(const EcmParams& p, const RelaxationCurve& curve);

/// Least-squares identification of OCV, R_e, C_e, R_c, C_c on the t > 0
/// samples, then R_o from the t = 0 drop. Branches are labelled so that
/// tau_e < tau_c. Throws InsufficientData below six samples.
FitReport fit_ecm(const RelaxationCurve& curve, const EcmFitOptions& options = {});

}  // namespace rulgp
