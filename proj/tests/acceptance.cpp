// Acceptance checks, one line per criterion:
//   acceptance            run all criteria
//   acceptance <n>        run criterion n only
// Exit status 0 when every selected criterion passes, 77 when the only
// selected criterion was skipped, 1 otherwise.
//
// Criterion 10 needs the public cycling dataset converted to the canonical
// layout; point RULGP_DATASET_MANIFEST at its manifest to enable it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rulgp/dataset.hpp"
#include "rulgp/ecm.hpp"
#include "rulgp/errors.hpp"
#include "rulgp/gpc.hpp"
#include "rulgp/gpr.hpp"
#include "rulgp/harness.hpp"
#include "rulgp/simgen.hpp"

using namespace rulgp;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Result {
  Outcome outcome;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

double max_rel_error(const EcmParams& got, const EcmParams& want) {
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  return std::max({rel(got.ocv, want.ocv), rel(got.r_o, want.r_o), rel(got.r_e, want.r_e), rel(got.c_e, want.c_e),
                   rel(got.r_c, want.r_c), rel(got.c_c, want.c_c)});
}

// 1. ECM round-trip.
Result ecm_round_trip() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ocv(3.9, 4.2), r_o(0.01, 0.05), r_e(0.005, 0.03), tau_e(100.0, 400.0),
      r_c(0.01, 0.05), tau_c(800.0, 3000.0);
  std::normal_distribution<double> noise(0.0, 1e-3);
  const double current = -0.175;
  int clean_ok = 0, noisy_ok = 0;
  double clean_worst = 0.0, noisy_median = 0.0, slowest = 0.0;
  std::vector<double> noisy_errors;
  for (int k = 0; k < 100; ++k) {
    EcmParams p;
    p.ocv = ocv(rng);
    p.r_o = r_o(rng);
    p.r_e = r_e(rng);
    p.c_e = tau_e(rng) / p.r_e;
    p.r_c = r_c(rng);
    p.c_c = tau_c(rng) / p.r_c;
    RelaxationCurve c;
    c.sampling_interval = 120.0;
    c.cutoff_current = current;
    for (int i = 0; i < 16; ++i) {
      c.t.push_back(120.0 * i);
      c.v.push_back(predict_relaxation(p, current, 120.0 * i));
    }
    auto t0 = Clock::now();
    const double e_clean = max_rel_error(fit_ecm(c).params, p);
    slowest = std::max(slowest, seconds_since(t0));
    clean_worst = std::max(clean_worst, e_clean);
    clean_ok += e_clean < 0.01;
    for (auto& v : c.v) v += noise(rng);
    t0 = Clock::now();
    const double e_noisy = max_rel_error(fit_ecm(c).params, p);
    slowest = std::max(slowest, seconds_since(t0));
    noisy_errors.push_back(e_noisy);
    noisy_ok += e_noisy < 0.05;
  }
  std::sort(noisy_errors.begin(), noisy_errors.end());
  noisy_median = noisy_errors[50];
  const bool pass = clean_ok == 100 && noisy_ok == 100 && slowest < 1.0;
  return {pass ? Outcome::Pass : Outcome::Fail,
          "noiseless " + std::to_string(clean_ok) + "/100 within 1% (worst " + fmt(100 * clean_worst) +
              "%); 1 mV noise " + std::to_string(noisy_ok) + "/100 within 5% (median worst-parameter error " +
              fmt(100 * noisy_median) + "%); slowest fit " + fmt(1e3 * slowest) + " ms"};
}

// 2. GPR against dense inversion.
Result gpr_oracle() {
  std::mt19937_64 rng(7);
  const auto x = gaussian_matrix(20, 3, rng);
  const Eigen::VectorXd y = (x.col(0).array().sin() * 10.0 + x.col(1).array()).matrix();
  const auto xs = gaussian_matrix(15, 3, rng);
  KernelParams k;
  k.sigma_f = 3.0;
  k.length_scales = (Eigen::VectorXd(3) << 0.7, 1.4, 2.5).finished();
  k.sigma_n = 0.2;
  const auto model = GprModel::condition(x, y, k, Standardizer::identity(3), false);
  auto kv = [&](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return k.sigma_f * k.sigma_f *
           std::exp(-((a - b).array() / k.length_scales.transpose().array()).matrix().norm());
  };
  Eigen::MatrixXd kxx(20, 20), kxs(20, 15);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) kxx(i, j) = kv(x.row(i), x.row(j));
    for (int j = 0; j < 15; ++j) kxs(i, j) = kv(x.row(i), xs.row(j));
  }
  const Eigen::MatrixXd inv =
      (kxx + (k.sigma_n * k.sigma_n + model.jitter()) * Eigen::MatrixXd::Identity(20, 20)).inverse();
  const Eigen::VectorXd mean = kxs.transpose() * inv * y;
  Eigen::VectorXd var(15);
  for (int j = 0; j < 15; ++j) var(j) = k.sigma_f * k.sigma_f + k.sigma_n * k.sigma_n - kxs.col(j).dot(inv * kxs.col(j));
  const auto pred = model.predict(xs);
  const double dm = (pred.mean - mean).cwiseAbs().maxCoeff();
  const double dv = (pred.variance - var).cwiseAbs().maxCoeff();
  return {dm < 1e-8 && dv < 1e-8 ? Outcome::Pass : Outcome::Fail,
          "max |mean diff| " + fmt(dm, 3) + ", max |variance diff| " + fmt(dv, 3)};
}

// 3. Marginal-likelihood gradient.
Result gpr_gradient() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto x = gaussian_matrix(25, 4, rng);
    Eigen::VectorXd y = x.col(0).array().sin() + 0.5 * x.col(2).array();
    y.array() -= y.mean();
    Eigen::VectorXd theta(6);
    theta << u(rng), u(rng), u(rng), u(rng), u(rng), std::log(0.1) + u(rng);
    const auto g = log_marginal_likelihood(x, y, KernelParams::from_log(theta)).gradient;
    for (int p = 0; p < theta.size(); ++p) {
      const double h = 1e-5;
      Eigen::VectorXd up = theta, down = theta;
      up(p) += h;
      down(p) -= h;
      const double fd = (log_marginal_likelihood(x, y, KernelParams::from_log(up)).value -
                         log_marginal_likelihood(x, y, KernelParams::from_log(down)).value) /
                        (2 * h);
      worst = std::max(worst, std::abs(g(p) - fd) / std::max(std::abs(fd), 1e-3));
    }
  }
  return {worst < 1e-5 ? Outcome::Pass : Outcome::Fail, "worst relative error " + fmt(worst, 3) + " over 50 points"};
}

// 4. Kernel positivity.
Result kernel_positivity() {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> nd(5, 80), dd(1, 8);
  std::uniform_real_distribution<double> ll(-2.0, 3.0);
  double worst = 0.0;
  int failures = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto raw = gaussian_matrix(nd(rng), dd(rng), rng);
    const auto x = Standardizer::fit(raw).apply(raw);
    KernelParams k;
    k.sigma_f = std::exp(ll(rng));
    k.length_scales.resize(x.cols());
    for (Eigen::Index m = 0; m < x.cols(); ++m) k.length_scales(m) = std::exp(ll(rng));
    Eigen::MatrixXd kmat(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd a = x.row(i).transpose();
      for (Eigen::Index j = 0; j < x.rows(); ++j) {
        const Eigen::VectorXd b = x.row(j).transpose();
        kmat(i, j) = kernel_eval({a.data(), static_cast<std::size_t>(a.size())},
                                 {b.data(), static_cast<std::size_t>(b.size())}, k);
      }
    }
    try {
      const double s2 = k.sigma_f * k.sigma_f;
      worst = std::max(worst, factorize_with_jitter(kmat, s2).jitter / s2);
    } catch (const Error&) {
      ++failures;
    }
  }
  return {failures == 0 && worst <= 1e-6 ? Outcome::Pass : Outcome::Fail,
          std::to_string(1000 - failures) + "/1000 factorized; largest jitter " + fmt(worst, 3) + " sigma_f^2"};
}

// 5. GPC quadrature and symmetry.
Result gpc_correctness() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> mean_d(-4.0, 4.0), var_d(0.01, 9.0);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const double mu = mean_d(rng), var = var_d(rng);
    double acc = 0.0;
    for (int s = 0; s < 1000000; ++s) acc += 1.0 / (1.0 + std::exp(-(mu + std::sqrt(var) * g(rng))));
    worst = std::max(worst, std::abs(expected_sigmoid(mu, var) - acc / 1e6));
  }
  Eigen::MatrixXd x(12, 2);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 6; ++i) {
    const double a = 0.5 + 0.3 * i, b = 0.2 * (i % 3) - 0.2;
    x.row(i) << -a, b;
    x.row(i + 6) << a, b;
    y(i) = -1;
    y(i + 6) = 1;
  }
  const auto model = BinaryGpc::train(x, y);
  const double p = model.predict(std::vector<double>{0.0, 0.0});
  const bool pass = worst < 1e-3 && std::abs(p - 0.5) < 1e-6;
  return {pass ? Outcome::Pass : Outcome::Fail,
          "quadrature vs Monte-Carlo worst " + fmt(worst, 3) + "; symmetric point p = " + fmt(p, 12)};
}

// 6. Metric examples and thresholds.
Result metric_examples() {
  const double r = rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4});
  const double m = mape(std::vector<double>{100, 200}, std::vector<double>{110, 180}, std::vector<double>{100, 100});
  const auto t1 = threshold(ThresholdPolicy::nca(), 1.0);
  const auto t9 = threshold(ThresholdPolicy::nca(), 0.9);
  const bool pass = r == std::sqrt(12.5) && std::abs(m - 15.0) < 1e-12 && std::abs(t1.upper - 450) < 1e-9 &&
                    std::abs(t1.lower - 180) < 1e-9 && std::abs(t9.upper - 225) < 1e-9 && std::abs(t9.lower - 90) < 1e-9;
  return {pass ? Outcome::Pass : Outcome::Fail, "rmse " + fmt(r, 17) + ", mape " + fmt(m, 17) + "%, thresholds (" +
                                                    fmt(t1.upper) + ", " + fmt(t1.lower) + ") and (" + fmt(t9.upper) +
                                                    ", " + fmt(t9.lower) + ")"};
}

struct SimSetup {
  std::vector<CellHistory> cells;
  DatasetSplit split;
  double mean_eol = 0.0;
};

SimSetup standard_setup() {
  const auto sim = simulate_dataset(SimulationRecipe::standard(3, 5, 7));
  SimSetup s{sim.cells, split_dataset(sim.cells, sim.manifest.split, sim.manifest.split_seed), 0.0};
  for (const auto& c : s.cells) s.mean_eol += *c.eol_cycle;
  s.mean_eol /= static_cast<double>(s.cells.size());
  return s;
}

double aggregate_rmse(const ExperimentReport& r, const std::string& set, std::size_t truncation = 0,
                      const std::string& chemistry = "NCA", const std::string& condition = "ALL") {
  for (const auto& m : r.metrics) {
    if (m.feature_set == set && m.truncation == truncation && m.chemistry == chemistry && m.condition == condition) {
      return m.rmse;
    }
  }
  throw std::runtime_error("no metric row for " + set + " " + chemistry + " " + condition);
}

// 7. Synthetic end-to-end RUL.
Result synthetic_rul() {
  const auto t0 = Clock::now();
  const auto s = standard_setup();
  RulExperimentConfig cfg;
  cfg.gpr.seed = 7;
  const auto report = run_feature_comparison(s.cells, s.split, {FeatureSet::NOVEL_PRED, FeatureSet::ECM}, cfg);
  const double novel = aggregate_rmse(report, "NOVEL_PRED"), ecm = aggregate_rmse(report, "ECM");
  const double elapsed = seconds_since(t0);
  const bool pass = novel <= 0.1 * s.mean_eol && novel < ecm && elapsed < 300.0;
  return {pass ? Outcome::Pass : Outcome::Fail,
          "NOVEL_PRED RMSE " + fmt(novel) + " cycles (" + fmt(100 * novel / s.mean_eol) + "% of mean life " +
              fmt(s.mean_eol) + "), ECM RMSE " + fmt(ecm) + ", " + fmt(elapsed, 3) + " s"};
}

// 8. Truncation robustness.
Result truncation_robustness() {
  const auto t0 = Clock::now();
  const auto s = standard_setup();
  RulExperimentConfig cfg;
  cfg.gpr.seed = 7;
  const auto report = run_truncation_sweep(s.cells, s.split, cfg, {6, 0});
  const double six = aggregate_rmse(report, "NOVEL_PRED", 6), full = aggregate_rmse(report, "NOVEL_PRED", 0);
  return {six <= 2.0 * full ? Outcome::Pass : Outcome::Fail,
          "RMSE at 6 samples " + fmt(six) + ", full curve " + fmt(full) + " (ratio " + fmt(six / full) + "), " +
              fmt(seconds_since(t0), 3) + " s"};
}

// 9. Synthetic triple classification.
Result synthetic_classification() {
  const auto t0 = Clock::now();
  const auto sim = simulate_dataset(SimulationRecipe::lifetime_classes(5, 11));
  const auto split = split_dataset(sim.cells, sim.manifest.split, sim.manifest.split_seed);
  ClassificationConfig cfg;
  cfg.feature_set = FeatureSet::NOVEL_CLASS;
  cfg.test_cycle = 100;
  cfg.window_cycles = 60;
  cfg.gpc.seed = 7;
  const auto report = run_classification_experiment(sim.cells, split, cfg);
  double accuracy = -1.0;
  std::size_t n = 0;
  for (const auto& a : report.accuracy) {
    if (a.condition == "ALL") {
      accuracy = a.accuracy;
      n = a.samples;
    }
  }
  const double elapsed = seconds_since(t0);
  return {accuracy >= 0.9 && elapsed < 300.0 ? Outcome::Pass : Outcome::Fail,
          "overall DAG accuracy " + fmt(100 * accuracy) + "% on " + std::to_string(n) + " held-out samples, " +
              fmt(elapsed, 3) + " s"};
}

// 10. Public dataset reproduction.
Result dataset_reproduction() {
  const char* manifest = std::getenv("RULGP_DATASET_MANIFEST");
  if (!manifest || !*manifest) return {Outcome::Skip, "RULGP_DATASET_MANIFEST not set; public dataset unavailable"};
  const auto ds = load_dataset(manifest);
  const auto split = split_dataset(ds.cells, ds.manifest.split, ds.manifest.split_seed);
  RulExperimentConfig cfg;
  cfg.gpr.seed = 7;
  const auto report = run_feature_comparison(ds.cells, split, {FeatureSet::NOVEL_PRED, FeatureSet::ECM}, cfg);
  const double cy35 = aggregate_rmse(report, "NOVEL_PRED", 0, "NCA", "CY35-0.5/1");
  const double nca_n = aggregate_rmse(report, "NOVEL_PRED", 0, "NCA"), nca_e = aggregate_rmse(report, "ECM", 0, "NCA");
  const double ncm_n = aggregate_rmse(report, "NOVEL_PRED", 0, "NCM"), ncm_e = aggregate_rmse(report, "ECM", 0, "NCM");
  const bool pass = cy35 >= 10.0 && cy35 <= 40.0 && nca_n < nca_e && ncm_n < ncm_e;
  return {pass ? Outcome::Pass : Outcome::Fail, "NCA CY35-0.5/1 NOVEL_PRED RMSE " + fmt(cy35) + "; NCA " + fmt(nca_n) +
                                                    " vs ECM " + fmt(nca_e) + "; NCM " + fmt(ncm_n) + " vs ECM " +
                                                    fmt(ncm_e)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Result()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "ECM round-trip", ecm_round_trip},
      {2, "GPR oracle equivalence", gpr_oracle},
      {3, "GPR marginal-likelihood gradient", gpr_gradient},
      {4, "kernel positivity", kernel_positivity},
      {5, "GPC correctness", gpc_correctness},
      {6, "metric unit tests", metric_examples},
      {7, "synthetic end-to-end RUL", synthetic_rul},
      {8, "truncation robustness", truncation_robustness},
      {9, "synthetic triple classification", synthetic_classification},
      {10, "dataset reproduction", dataset_reproduction},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0, passed = 0, skipped = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = r.outcome == Outcome::Pass ? "PASS" : r.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    std::cout << tag << "  criterion " << c.id << " (" << c.name << "): " << r.detail << std::endl;
    failed += r.outcome == Outcome::Fail;
    passed += r.outcome == Outcome::Pass;
    skipped += r.outcome == Outcome::Skip;
  }
  if (failed) return 1;
  return passed == 0 && skipped > 0 ? 77 : 0;
}
