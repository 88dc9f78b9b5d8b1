#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "rulgp/gpc.hpp"
#include "support.hpp"

using namespace rulgp;
using rulgp::test::error_kind;

namespace {

KernelParams params(double sf, std::vector<double> l) {
  KernelParams k;
  k.sigma_f = sf;
  k.length_scales = Eigen::Map<Eigen::VectorXd>(l.data(), static_cast<Eigen::Index>(l.size()));
  return k;
}

// Two 1D clusters mirrored about 0: -1 labels on the left, +1 on the right.
void mirrored(Eigen::MatrixXd& x, Eigen::VectorXd& y) {
  const std::vector<double> offsets{0.8, 1.0, 1.1, 1.3, 1.6};
  x.resize(10, 1);
  y.resize(10);
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = -offsets[static_cast<std::size_t>(i)];
    y(i) = -1;
    x(i + 5, 0) = offsets[static_cast<std::size_t>(i)];
    y(i + 5) = 1;
  }
}

double sigmoid(double f) { return 1.0 / (1.0 + std::exp(-f)); }

}  // namespace

TEST_CASE("thresholds scale linearly with SOH") {
  const auto nca = ThresholdPolicy::nca();
  CHECK(threshold(nca, 1.0).upper == doctest::Approx(450.0));
  CHECK(threshold(nca, 1.0).lower == doctest::Approx(180.0));
  CHECK(threshold(nca, 0.9).upper == doctest::Approx(225.0));
  CHECK(threshold(nca, 0.9).lower == doctest::Approx(90.0));
  CHECK(error_kind([&] { threshold(nca, 0.8); }) == "OutOfDomain");
  CHECK(ThresholdPolicy::for_chemistry(Chemistry::NCM).upper_at_soh1 == 800.0);
  CHECK(ThresholdPolicy::for_chemistry(Chemistry::NCM_NCA).lower_at_soh1 == 200.0);
  CHECK(error_kind([] { ThresholdPolicy{100.0, 200.0}.validate(); }) == "InvalidThresholds");
}

TEST_CASE("label_sample: closed middle interval partitions [0, inf)") {
  const Thresholds t{450.0, 180.0};
  CHECK(label_sample(500, t) == LifetimeLabel::Long);
  CHECK(label_sample(450, t) == LifetimeLabel::Medium);
  CHECK(label_sample(180, t) == LifetimeLabel::Medium);
  CHECK(label_sample(100, t) == LifetimeLabel::Short);
  for (double r = 0.0; r < 1000.0; r += 0.5) {
    const auto label = label_sample(r, t);
    const int hits = (r > 450) + (r < 180) + (r >= 180 && r <= 450);
    CHECK(hits == 1);
    CHECK(label == (r > 450 ? LifetimeLabel::Long : r < 180 ? LifetimeLabel::Short : LifetimeLabel::Medium));
  }
  CHECK(parse_lifetime_label(to_string(LifetimeLabel::Medium)) == LifetimeLabel::Medium);
}

TEST_CASE("Gauss-Hermite rule integrates polynomials exactly") {
  const auto& rule = gauss_hermite_32();
  double w0 = 0.0, x2 = 0.0, x4 = 0.0;
  for (const auto& [x, w] : rule) {
    w0 += w;
    x2 += w * x * x;
    x4 += w * x * x * x * x;
  }
  CHECK(w0 == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-13));
  CHECK(x2 == doctest::Approx(std::sqrt(M_PI) / 2).epsilon(1e-13));
  CHECK(x4 == doctest::Approx(3 * std::sqrt(M_PI) / 4).epsilon(1e-13));
}

TEST_CASE("expected sigmoid matches a 1e6-sample Monte-Carlo oracle on 20 cases") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> mean_d(-4.0, 4.0), var_d(0.01, 9.0);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const double mu = mean_d(rng), var = var_d(rng);
    double acc = 0.0;
    for (int s = 0; s < 1000000; ++s) acc += sigmoid(mu + std::sqrt(var) * g(rng));
    worst = std::max(worst, std::abs(expected_sigmoid(mu, var) - acc / 1e6));
  }
  CHECK(worst < 1e-3);
  CHECK(expected_sigmoid(0.0, 3.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(expected_sigmoid(1.3, 0.0) == doctest::Approx(sigmoid(1.3)));
}

TEST_CASE("symmetric point between mirrored classes predicts 0.5") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  mirrored(x, y);
  const auto model = BinaryGpc::train(x, y);
  const std::vector<double> mid{0.0};
  CHECK(std::abs(model.predict(mid) - 0.5) < 1e-6);
  const auto fixed = BinaryGpc::condition(x, y, params(2.0, {1.0}), Standardizer::identity(1));
  CHECK(std::abs(fixed.predict(mid) - 0.5) < 1e-6);
}

TEST_CASE("separable toy: mode signs agree with labels, deep points are confident") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 0.2);
  Eigen::MatrixXd x(60, 1);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    y(i) = i < 30 ? -1.0 : 1.0;
    x(i, 0) = 2.0 * y(i) + g(rng);
  }
  const auto model = BinaryGpc::train(x, y);
  for (int i = 0; i < 60; ++i) CHECK(model.mode()(i) * y(i) > 0.0);
  // Evidence training on separable data inflates sigma_f, which moderates the
  // averaged probability; confidence is checked at fixed hyperparameters.
  const auto fixed = BinaryGpc::condition(x, y, params(3.0, {2.0}), Standardizer::identity(1));
  CHECK(fixed.predict(std::vector<double>{2.0}) > 0.9);
  CHECK(fixed.predict(std::vector<double>{-2.0}) < 0.1);
  CHECK(model.predict(std::vector<double>{2.0}) > 0.8);
  CHECK(model.predict(std::vector<double>{-2.0}) < 0.2);
  CHECK(model.stationarity_residual() < 1e-8);
  const auto again = BinaryGpc::train(x, y);
  CHECK(again.kernel().to_log() == model.kernel().to_log());
  CHECK(again.mode() == model.mode());
  for (double q : {-50.0, -3.0, 0.2, 3.0, 50.0}) {
    const double p = model.predict(std::vector<double>{q});
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("evidence gradient matches central differences") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(25, 2);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) {
    x(i, 0) = g(rng);
    x(i, 1) = g(rng);
    y(i) = x(i, 0) + 0.5 * g(rng) > 0 ? 1.0 : -1.0;
  }
  for (const auto& k : {params(1.0, {1.0, 2.0}), params(3.0, {0.5, 0.8}), params(0.4, {2.0, 0.3})}) {
    const auto ev = BinaryGpc::evidence(x, y, k);
    const Eigen::VectorXd theta = k.to_log().head(3);
    for (int p = 0; p < 3; ++p) {
      const double h = 1e-5;
      Eigen::VectorXd up = theta, down = theta;
      up(p) += h;
      down(p) -= h;
      auto kp = [&](const Eigen::VectorXd& t) {
        Eigen::VectorXd full(4);
        full << t, std::log(1e-300);
        auto out = KernelParams::from_log(full);
        out.sigma_n = 0.0;
        return out;
      };
      const double fd = (BinaryGpc::evidence(x, y, kp(up)).value - BinaryGpc::evidence(x, y, kp(down)).value) / (2 * h);
      CHECK(std::abs(ev.gradient(p) - fd) / std::max(std::abs(fd), 1e-3) < 1e-5);
    }
  }
}

TEST_CASE("binary training input checks") {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  CHECK(error_kind([&] { BinaryGpc::train(x, Eigen::VectorXd::Ones(4)); }) == "OneClassOnly");
  Eigen::VectorXd bad(4);
  bad << 1, -1, 0, 1;
  CHECK(error_kind([&] { BinaryGpc::train(x, bad); }) == "InvalidLabel");
  Eigen::VectorXd y(4);
  y << -1, -1, 1, 1;
  const auto model = BinaryGpc::train(x, y);
  CHECK(error_kind([&] { model.predict(std::vector<double>{1.0, 2.0}); }) == "DimensionMismatch");
}

TEST_CASE("DAG routing with stub probabilities") {
  auto d = route(0.9, 0.8, 0.1);
  CHECK(d.label == LifetimeLabel::Long);
  CHECK(d.probability == doctest::Approx(0.8));
  d = route(0.2, 0.9, 0.3);
  CHECK(d.label == LifetimeLabel::Medium);
  CHECK(d.probability == doctest::Approx(0.7));
  d = route(0.2, 0.9, 0.75);
  CHECK(d.label == LifetimeLabel::Short);
  CHECK(d.probability == doctest::Approx(0.75));
  d = route(0.9, 0.3, 0.9);
  CHECK(d.label == LifetimeLabel::Medium);
  CHECK(d.probability == doctest::Approx(0.7));
  // Ties: stage 1 goes short, stage 2 goes medium.
  d = route(0.5, 0.99, 0.99);
  CHECK(d.label == LifetimeLabel::Short);
  d = route(0.5, 0.99, 0.5);
  CHECK(d.label == LifetimeLabel::Medium);
  d = route(0.7, 0.5, 0.1);
  CHECK(d.label == LifetimeLabel::Medium);
  // Monotone rescaling that keeps the 0.5 crossing keeps the label.
  for (double p1 : {0.1, 0.4, 0.6, 0.9})
    for (double p2 : {0.2, 0.45, 0.55, 0.8}) {
      auto squash = [](double p) { return 0.5 + 0.5 * std::tanh(3.0 * (p - 0.5)) / std::tanh(1.5); };
      CHECK(route(p1, p2, p2).label == route(squash(p1), squash(p2), squash(p2)).label);
    }
}

TEST_CASE("DAG: three separated clusters classify held-out points") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g(0.0, 0.3);
  const double centres[3][2] = {{-2.0, 0.0}, {0.0, 1.5}, {2.0, 0.0}};
  auto draw = [&](int per_class, Eigen::MatrixXd& x, std::vector<LifetimeLabel>& labels) {
    x.resize(3 * per_class, 2);
    labels.clear();
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < per_class; ++i) {
        const int r = c * per_class + i;
        x(r, 0) = centres[c][0] + g(rng);
        x(r, 1) = centres[c][1] + g(rng);
        labels.push_back(static_cast<LifetimeLabel>(c));
      }
    }
  };
  Eigen::MatrixXd x, xt;
  std::vector<LifetimeLabel> labels, truth;
  draw(15, x, labels);
  draw(40, xt, truth);
  const auto dag = LifeDag::train(x, labels);
  const auto decisions = dag.classify(xt);
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += decisions[i].label == truth[i];
  CHECK(correct >= static_cast<int>(0.95 * truth.size()));

  std::stringstream s;
  dag.save(s);
  const auto back = LifeDag::load(s);
  const auto again = back.classify(xt);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(again[i].label == decisions[i].label);
    CHECK(again[i].probability == decisions[i].probability);
  }
  std::vector<LifetimeLabel> two(labels.size(), LifetimeLabel::Short);
  two.back() = LifetimeLabel::Long;
  CHECK(error_kind([&] { LifeDag::train(x, two); }) == "OneClassOnly");
}

TEST_CASE("binary save and load") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  mirrored(x, y);
  const auto model = BinaryGpc::train(x, y);
  std::stringstream s;
  model.save(s);
  const auto back = BinaryGpc::load(s);
  for (double q : {-1.0, 0.3, 2.0}) CHECK(back.predict(std::vector<double>{q}) == model.predict(std::vector<double>{q}));
}
