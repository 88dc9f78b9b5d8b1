#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rulgp/features.hpp"
#include "rulgp/simgen.hpp"
#include "support.hpp"

using namespace rulgp;
using rulgp::test::error_kind;

namespace {

RelaxationCurve curve_from(std::vector<double> v, double dt = 120.0) {
  RelaxationCurve c;
  c.sampling_interval = dt;
  c.cutoff_current = -0.175;
  for (std::size_t k = 0; k < v.size(); ++k) c.t.push_back(static_cast<double>(k) * dt);
  c.v = std::move(v);
  return c;
}

// Linear discharge from 4.2 V to 2.7 V over `capacity` Ah, plus an optional
// capacity offset linear in voltage.
DischargeCurve linear_discharge(double capacity, double ramp_span = 0.0, int points = 301) {
  DischargeCurve d;
  d.current = 3.5;
  for (int k = 0; k < points; ++k) {
    const double x = static_cast<double>(k) / (points - 1);
    const double v = 4.2 - 1.5 * x;
    d.v.push_back(v);
    d.q.push_back(capacity * x + ramp_span * (v - 2.7) / 1.5);
    d.t.push_back(3600.0 * capacity * x / d.current);
  }
  return d;
}

CellHistory simulated(int cycles, double noise = 0.0) {
  auto profile = default_profile();
  profile.noise_sigma = noise;
  return simulate_cell(profile, Protocol::nca_like(), cycles, "f");
}

}  // namespace

TEST_CASE("delta_v: identity, offset, antisymmetry, grid mismatch") {
  const auto a = curve_from({4.10, 4.12, 4.13, 4.135});
  auto b = a;
  for (auto& v : b.v) v -= 0.001;
  for (double x : delta_v(a, a)) CHECK(x == 0.0);
  for (double x : delta_v(b, a)) CHECK(x == doctest::Approx(-0.001).epsilon(1e-9));
  const auto ab = delta_v(a, b), ba = delta_v(b, a);
  for (std::size_t k = 0; k < ab.size(); ++k) CHECK(ab[k] == -ba[k]);
  CHECK(error_kind([&] { delta_v(a, curve_from(a.v, 60.0)); }) == "TimeGridMismatch");
}

TEST_CASE("delta_v_features: constant and zero difference") {
  const std::vector<double> dv(16, -0.001);
  const auto s = delta_v_features(dv, 120.0, 1800.0);
  CHECK(s.sum_dv == doctest::Approx(-0.015).epsilon(1e-12));
  CHECK(s.last_dv == -0.001);
  const auto z = delta_v_features(std::vector<double>(16, 0.0), 120.0, 1800.0);
  CHECK(z.sum_dv == 0.0);
  CHECK(z.last_dv == 0.0);
  CHECK(error_kind([&] { delta_v_features(dv, 120.0, 3600.0); }) == "HorizonExceedsData");
}

TEST_CASE("stats_features: hand examples") {
  const auto flat = stats_features(std::vector<double>{-0.001, -0.001, -0.001});
  CHECK(flat.degenerate);
  CHECK(flat.values[0] == 0.0);
  CHECK(flat.values[1] == 0.0);
  CHECK(flat.values[2] == 0.0);
  CHECK(flat.values[3] == -0.001);
  CHECK(flat.values[4] == -0.001);
  CHECK(flat.values[5] == doctest::Approx(-0.001));

  const auto two = stats_features(std::vector<double>{0.0, -0.002});
  CHECK(two.values[5] == doctest::Approx(-0.001));
  CHECK(two.values[0] == doctest::Approx(2e-6));
  CHECK(two.values[6] == doctest::Approx(-0.002));
  CHECK(two.values[7] == -0.002);

  const auto sym = stats_features(std::vector<double>{-3, -1, 0, 1, 3});
  CHECK(std::abs(sym.values[1]) < 1e-12);
  CHECK(!sym.degenerate);
}

TEST_CASE("delta_q_variance: floor, symmetry and the ramp oracle") {
  const auto n = linear_discharge(3.0);
  CHECK(delta_q_variance(n, n) == doctest::Approx(-12.0));

  const auto m = linear_discharge(3.0, 0.01);
  // Brute force: sample variance of a uniform ramp of span 0.01 on 1000 points.
  std::vector<double> ramp(1000);
  for (int i = 0; i < 1000; ++i) ramp[static_cast<std::size_t>(i)] = 0.01 * i / 999.0;
  const double mean = std::accumulate(ramp.begin(), ramp.end(), 0.0) / 1000.0;
  double ss = 0.0;
  for (double x : ramp) ss += (x - mean) * (x - mean);
  const double oracle = std::log10(ss / 999.0);
  CHECK(delta_q_variance(m, n) == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(delta_q_variance(m, n) == doctest::Approx(-5.078).epsilon(2e-4));
  CHECK(delta_q_variance(m, n) == doctest::Approx(delta_q_variance(n, m)).epsilon(1e-12));

  auto far = n;
  for (auto& v : far.v) v -= 2.0;
  CHECK(error_kind([&] { delta_q_variance(n, far); }) == "NoVoltageOverlap");
}

TEST_CASE("capacity_at_voltage interpolates the monotone map") {
  const auto d = linear_discharge(3.0);
  CHECK(capacity_at_voltage(d, 4.2) == doctest::Approx(0.0));
  CHECK(capacity_at_voltage(d, 3.45) == doctest::Approx(1.5));
  CHECK(capacity_at_voltage(d, 2.7) == doctest::Approx(3.0));
}

TEST_CASE("delta_t: floor and log identity") {
  const auto a = linear_discharge(3.0);
  CHECK(delta_t(a, a) == doctest::Approx(-3.0));
  auto b = a;
  for (auto& t : b.t) t *= (b.t.back() + 100.0) / b.t.back();
  CHECK(delta_t(b, a) == doctest::Approx(2.0));
}

TEST_CASE("benchmark features: throughput and calendar days") {
  const auto h = simulated(10);
  const auto first = benchmark_features(h, 1);
  CHECK(first.sum_days == 0.0);
  CHECK(first.sum_ah == doctest::Approx(h.cycles[0].charge_ah + h.cycles[0].discharge->q.back()));
  double total = 0.0;
  for (const auto& c : h.cycles) total += c.charge_ah + c.discharge->q.back();
  CHECK(benchmark_features(h, 10).sum_ah == doctest::Approx(total));
  CHECK(error_kind([&] { benchmark_features(h, 11); }) == "UnknownCycle");
}

TEST_CASE("assemble: feature-set dimensions and names") {
  const auto h = simulated(20);
  const CellFeatures cf(h);
  CHECK(cf.assemble(5, WindowSpec::fixed(1, 5), FeatureSet::ECM).values.size() == 6);
  CHECK(cf.assemble(5, WindowSpec::fixed(1, 5), FeatureSet::STATS).values.size() == 8);
  CHECK(cf.assemble(5, WindowSpec::fixed(1, 5), FeatureSet::BENCHMARK).values.size() == 8);
  CHECK(cf.assemble(5, WindowSpec::fixed(1, 5), FeatureSet::NOVEL_PRED).values.size() == 8);
  CHECK(cf.assemble(5, WindowSpec::adjacent(5), FeatureSet::NOVEL_CLASS).values.size() == 8);
  CHECK(cf.assemble(5, WindowSpec::adjacent(5), FeatureSet::RATE_CLASS).values.size() == 2);
  const auto ecm = cf.assemble(5, WindowSpec::fixed(1, 5), FeatureSet::ECM);
  const auto& fit = cf.ecm(5).params;
  CHECK(ecm.values == std::vector<double>{fit.ocv, fit.r_o, fit.r_e, fit.c_e, fit.r_c, fit.c_c});
  const auto pred = cf.assemble(5, WindowSpec::fixed(1, 5), FeatureSet::NOVEL_PRED);
  CHECK(pred.names == feature_names(FeatureSet::NOVEL_PRED));
  CHECK(pred.names.back() == "last_dv");
}

TEST_CASE("assemble: window rules and missing data") {
  auto h = simulated(20);
  const CellFeatures cf(h);
  CHECK(error_kind([&] { cf.assemble(5, WindowSpec::fixed(3, 5), FeatureSet::NOVEL_CLASS); }) == "InvalidWindow");
  CHECK(error_kind([&] { cf.assemble(5, WindowSpec{3, 5, WindowMode::Adjacent}, FeatureSet::NOVEL_CLASS); }) ==
        "InvalidWindow");
  CHECK(error_kind([&] { cf.assemble(5, WindowSpec::fixed(5, 5), FeatureSet::NOVEL_PRED); }) == "InvalidWindow");
  CHECK(error_kind([&] { cf.assemble(6, WindowSpec::fixed(1, 5), FeatureSet::NOVEL_PRED); }) == "InvalidWindow");
  for (auto& c : h.cycles) c.discharge.reset();
  const CellFeatures bare(h);
  CHECK(error_kind([&] { bare.assemble(5, WindowSpec::adjacent(5), FeatureSet::RATE_CLASS); }) ==
        "MissingDischargeData");
  CHECK(bare.assemble(5, WindowSpec::fixed(1, 5), FeatureSet::NOVEL_PRED).values.size() == 8);
}

TEST_CASE("monotone drift: sum_dv and last_dv non-increasing in m") {
  const auto h = simulated(300);
  const CellFeatures cf(h, {}, Execution::Parallel);
  double prev_sum = 0.0, prev_last = 0.0;
  for (int m = 2; m <= 300; m += 7) {
    const auto fv = cf.assemble(m, WindowSpec::fixed(1, m), FeatureSet::NOVEL_PRED);
    CHECK(fv.value("sum_dv") <= prev_sum);
    CHECK(fv.value("last_dv") <= prev_last);
    CHECK(fv.value("last_dv") < 0.0);
    prev_sum = fv.value("sum_dv");
    prev_last = fv.value("last_dv");
  }
}

TEST_CASE("faster fade gives larger adjacent delta-Q variance") {
  auto slow = default_profile();
  auto fast = default_profile();
  fast.fade.a = 0.4;
  const auto hs = simulate_cell(slow, Protocol::nca_like(), 60, "s");
  const auto hf = simulate_cell(fast, Protocol::nca_like(), 60, "f");
  const double vs = delta_q_variance(*hs.cycle(50).discharge, *hs.cycle(49).discharge);
  const double vf = delta_q_variance(*hf.cycle(50).discharge, *hf.cycle(49).discharge);
  CHECK(std::isfinite(vs));
  CHECK(vf > vs);
  const double t1 = delta_t(*hs.cycle(50).discharge, *hs.cycle(49).discharge);
  const double t10 = delta_t(*hs.cycle(50).discharge, *hs.cycle(40).discharge);
  CHECK(t10 > t1);
}

TEST_CASE("truncation option fits on the first samples only") {
  const auto h = simulated(5, 1e-3);
  ExtractionOptions opt;
  opt.truncate = 6;
  const CellFeatures cf(h, opt);
  CHECK(cf.ecm(3).params == fit_ecm(h.cycle(3).relaxation.truncated(6)).params);
  ExtractionOptions bad;
  bad.truncate = 5;
  CHECK(error_kind([&] { CellFeatures(h, bad); }) == "InsufficientData");
}

TEST_CASE("assembly is deterministic and one-off assembly matches the cached path") {
  const auto h = simulated(30, 1e-3);
  const CellFeatures a(h, {}, Execution::Parallel), b(h, {}, Execution::Serial);
  for (const auto set : {FeatureSet::STATS, FeatureSet::NOVEL_PRED, FeatureSet::BENCHMARK}) {
    CHECK(a.assemble(20, WindowSpec::fixed(1, 20), set).values == b.assemble(20, WindowSpec::fixed(1, 20), set).values);
    CHECK(assemble(h, 20, WindowSpec::fixed(1, 20), set).values ==
          a.assemble(20, WindowSpec::fixed(1, 20), set).values);
  }
}

TEST_CASE("feature set names parse in either spelling") {
  CHECK(parse_feature_set("novel-pred") == FeatureSet::NOVEL_PRED);
  CHECK(parse_feature_set("RATE_CLASS") == FeatureSet::RATE_CLASS);
  CHECK(error_kind([] { parse_feature_set("bogus"); }) == "UsageError");
  CHECK(is_classification_set(FeatureSet::NOVEL_CLASS));
  CHECK_FALSE(is_classification_set(FeatureSet::STATS));
}
