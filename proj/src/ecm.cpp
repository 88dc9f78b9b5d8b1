#include "rulgp/ecm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rulgp/errors.hpp"

namespace rulgp {

namespace {

// Unknowns: OCV, ln R_e, ln C_e, ln R_c, ln C_c.
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

constexpr double kLogRMin = -20.7;  // ~1e-9 ohm
constexpr double kLogRMax = 6.9;    // ~1e3 ohm
constexpr double kLogCMin = -6.9;
constexpr double kLogCMax = 27.6;   // ~1e12 F

struct Problem {
  std::vector<double> t, v;  // t > 0 samples only
  double current;
  double ocv_lo, ocv_hi;
};

Vec5 to_theta(const EcmParams& p) {
  Vec5 th;
  th << p.ocv, std::log(p.r_e), std::log(p.c_e), std::log(p.r_c), std::log(p.c_c);
  return th;
}

EcmParams from_theta(const Vec5& th) {
  EcmParams p;
  p.ocv = th[0];
  p.r_e = std::exp(th[1]);
  p.c_e = std::exp(th[2]);
  p.r_c = std::exp(th[3]);
  p.c_c = std::exp(th[4]);
  return p;
}

void project(Vec5& th, const Problem& pr) {
  th[0] = std::clamp(th[0], pr.ocv_lo, pr.ocv_hi);
  th[1] = std::clamp(th[1], kLogRMin, kLogRMax);
  th[3] = std::clamp(th[3], kLogRMin, kLogRMax);
  th[2] = std::clamp(th[2], kLogCMin, kLogCMax);
  th[4] = std::clamp(th[4], kLogCMin, kLogCMax);
}

double cost(const Vec5& th, const Problem& pr) {
  const double ae = pr.current * std::exp(th[1]), tau_e = std::exp(th[1] + th[2]);
  const double ac = pr.current * std::exp(th[3]), tau_c = std::exp(th[3] + th[4]);
  double s = 0.0;
  for (std::size_t k = 0; k < pr.t.size(); ++k) {
    const double r = th[0] - ae * std::exp(-pr.t[k] / tau_e) - ac * std::exp(-pr.t[k] / tau_c) - pr.v[k];
    s += r * r;
  }
  return 0.5 * s;
}

void linearize(const Vec5& th, const Problem& pr, Mat5& jtj, Vec5& jtr) {
  const double ae = pr.current * std::exp(th[1]), tau_e = std::exp(th[1] + th[2]);
  const double ac = pr.current * std::exp(th[3]), tau_c = std::exp(th[3] + th[4]);
  jtj.setZero();
  jtr.setZero();
  Vec5 row;
  for (std::size_t k = 0; k < pr.t.size(); ++k) {
    const double t = pr.t[k];
    const double ee = ae * std::exp(-t / tau_e), ec = ac * std::exp(-t / tau_c);
    const double r = th[0] - ee - ec - pr.v[k];
    // d/d ln R of A*exp(-t/(RC)) = A*E*(1 + t/tau); d/d ln C = A*E*t/tau.
    row << 1.0, -ee * (1.0 + t / tau_e), -ee * (t / tau_e), -ec * (1.0 + t / tau_c), -ec * (t / tau_c);
    jtj.noalias() += row * row.transpose();
    jtr.noalias() += row * r;
  }
}

struct LocalFit {
  Vec5 theta = Vec5::Zero();
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

LocalFit levenberg_marquardt(Vec5 th, const Problem& pr, const EcmFitOptions& opt) {
  project(th, pr);
  double c = cost(th, pr);
  double lambda = 1e-3;
  double nu = 2.0;
  Mat5 jtj;
  Vec5 jtr;
  linearize(th, pr, jtj, jtr);
  int it = 0;
  bool converged = c == 0.0;
  while (!converged && it < opt.max_iterations) {
    ++it;
    Mat5 a = jtj;
    const double dmax = jtj.diagonal().maxCoeff();
    for (int k = 0; k < 5; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12 * dmax + 1e-300);
    const Vec5 step = a.ldlt().solve(-jtr);
    if (!step.allFinite()) {
      lambda *= nu;
      nu *= 2.0;
      if (lambda > 1e20) break;
      continue;
    }
    Vec5 trial = th + step;
    project(trial, pr);
    const Vec5 taken = trial - th;
    const double c_new = cost(trial, pr);
    const double predicted = -taken.dot(jtr) - 0.5 * taken.dot(jtj * taken);
    const double rho = predicted > 0.0 ? (c - c_new) / predicted : -1.0;
    if (c_new < c && rho > 0.0) {
      const double rel = (c - c_new) / c;
      th = trial;
      c = c_new;
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      if (rel < opt.relative_cost_tol || taken.norm() < opt.step_tol || c == 0.0) converged = true;
      linearize(th, pr, jtj, jtr);
    } else {
      lambda *= nu;
      nu *= 2.0;
      // No descent direction left at this precision: a stationary point.
      if (lambda > 1e16 || taken.norm() < opt.step_tol) converged = true;
    }
  }
  return {th, c, it, converged};
}

Problem make_problem(const RelaxationCurve& curve) {
  Problem pr;
  pr.current = curve.cutoff_current;
  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    vmin = std::min(vmin, curve.v[k]);
    vmax = std::max(vmax, curve.v[k]);
    if (curve.t[k] > 0.0) {
      pr.t.push_back(curve.t[k]);
      pr.v.push_back(curve.v[k]);
    }
  }
  pr.ocv_lo = vmin - 0.05;
  pr.ocv_hi = vmax + 0.3;
  return pr;
}

void check_curve(const RelaxationCurve& curve) {
  if (curve.size() < kMinRelaxationSamples) {
    throw data_error("InsufficientData", "minimum " + std::to_string(kMinRelaxationSamples) +
                                             " relaxation samples, got " + std::to_string(curve.size()));
  }
  if (curve.t.size() != curve.v.size()) throw data_error("ValidationError", "relaxation t/v length mismatch");
  if (curve.t.front() != 0.0) throw data_error("ValidationError", "relaxation must start at t = 0");
  if (curve.cutoff_current == 0.0) {
    throw data_error("ValidationError", "relaxation cutoff current is zero; polarization is unobservable");
  }
}

// Best (tau_e, tau_c) pairs on a log grid, with OCV and both amplitudes
// solved by linear least squares. Catches time constants outside [dT, T].
std::vector<EcmParams> grid_starts(const RelaxationCurve& curve) {
  constexpr int kGrid = 40;
  constexpr std::size_t kKeep = 2;
  std::vector<double> t, v;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (curve.t[k] > 0.0) {
      t.push_back(curve.t[k]);
      v.push_back(curve.v[k]);
    }
  }
  const double lo = std::log(curve.t[1] / 20.0), hi = std::log(curve.t.back() * 20.0);
  std::vector<double> taus(kGrid);
  for (int i = 0; i < kGrid; ++i) taus[i] = std::exp(lo + (hi - lo) * i / (kGrid - 1));
  const auto n = static_cast<Eigen::Index>(t.size());
  const Eigen::Map<const Eigen::VectorXd> y(v.data(), n);
  const double current = curve.cutoff_current;
  struct Candidate {
    double sse;
    EcmParams p;
  };
  std::vector<Candidate> best;
  Eigen::MatrixXd a(n, 3);
  for (int i = 0; i < kGrid; ++i) {
    for (int j = i + 1; j < kGrid; ++j) {
      for (Eigen::Index k = 0; k < n; ++k) {
        a(k, 0) = 1.0;
        a(k, 1) = -current * std::exp(-t[k] / taus[i]);
        a(k, 2) = -current * std::exp(-t[k] / taus[j]);
      }
      const Eigen::Vector3d x = a.colPivHouseholderQr().solve(y);
      if (!x.allFinite() || !(x[1] > 0.0) || !(x[2] > 0.0)) continue;
      Candidate c{(a * x - y).squaredNorm(), {}};
      c.p.ocv = x[0];
      c.p.r_e = x[1];
      c.p.c_e = taus[i] / x[1];
      c.p.r_c = x[2];
      c.p.c_c = taus[j] / x[2];
      best.push_back(c);
      std::sort(best.begin(), best.end(), [](const Candidate& l, const Candidate& r) { return l.sse < r.sse; });
      if (best.size() > kKeep) best.pop_back();
    }
  }
  std::vector<EcmParams> out;
  for (const auto& c : best) out.push_back(c.p);
  return out;
}

}  // namespace

double predict_relaxation(const EcmParams& p, double cutoff_current, double t) {
  double u = p.ocv - cutoff_current * p.r_e * std::exp(-t / p.tau_e()) -
             cutoff_current * p.r_c * std::exp(-t / p.tau_c());
  if (t == 0.0) u -= cutoff_current * p.r_o;
  return u;
}

std::vector<double> predict_relaxation(const EcmParams& p, double cutoff_current, std::span<const double> times) {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(predict_relaxation(p, cutoff_current, t));
  return out;
}

std::vector<EcmParams> ecm_initial_guesses(const RelaxationCurve& curve) {
  check_curve(curve);
  const double ocv0 = curve.v.back();
  const double dt = curve.t[1];
  const double horizon = curve.t.back();
  // Total polarization seen at the first t > 0 sample, as a resistance.
  double r_total = (ocv0 - curve.v[1]) / curve.cutoff_current;
  const double r_floor = 1e-6 / std::fabs(curve.cutoff_current);
  if (!(r_total > r_floor)) r_total = r_floor;
  const double ratio = horizon / dt;
  const double tau_e = dt * std::pow(ratio, 1.0 / 3.0);
  const double tau_c = dt * std::pow(ratio, 2.0 / 3.0);
  std::vector<EcmParams> starts;
  for (double share : {0.3, 0.5, 0.7, 0.9}) {
    EcmParams p;
    p.ocv = ocv0;
    p.r_e = share * r_total;
    p.r_c = (1.0 - share) * r_total;
    p.c_e = tau_e / p.r_e;
    p.c_c = tau_c / p.r_c;
    starts.push_back(p);
  }
  for (const auto& p : grid_starts(curve)) starts.push_back(p);
  return starts;
}

double relaxation_residual_rms(const EcmParams& p, const RelaxationCurve& curve) {
  double s = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (curve.t[k] <= 0.0) continue;
    const double r = predict_relaxation(p, curve.cutoff_current, curve.t[k]) - curve.v[k];
    s += r * r;
    ++n;
  }
  return n ? std::sqrt(s / n) : 0.0;
}

FitReport fit_ecm(const RelaxationCurve& curve, const EcmFitOptions& options) {
  check_curve(curve);
  const Problem pr = make_problem(curve);
  FitReport report;
  bool have = false;
  LocalFit best{};
  for (const auto& start : ecm_initial_guesses(curve)) {
    const LocalFit local = levenberg_marquardt(to_theta(start), pr, options);
    report.iterations += local.iterations;
    report.converged = report.converged || local.converged;
    // Strict improvement keeps the earliest start on ties.
    if (!have || local.cost < best.cost) {
      best = local;
      have = true;
    }
  }

  EcmParams p = from_theta(best.theta);
  if (p.tau_e() > p.tau_c()) {
    std::swap(p.r_e, p.r_c);
    std::swap(p.c_e, p.c_c);
  }
  p.r_o = std::fabs(curve.v.front() - p.ocv) / std::fabs(curve.cutoff_current) - p.r_e - p.r_c;
  if (p.r_o < 0.0) {
    p.r_o = 0.0;
    report.r_o_clamped = true;
  }
  report.params = p;
  report.residual_rms = std::sqrt(2.0 * best.cost / static_cast<double>(pr.t.size()));
  return report;
}

}  // namespace rulgp
