#include <doctest.h>

#include <random>

#include "rulgp/kernels.hpp"
#include "rulgp/simgen.hpp"

using namespace rulgp;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

}  // namespace

TEST_CASE("covariance: parallel matches serial exactly") {
  const auto x = random_matrix(120, 5, 1);
  const auto y = random_matrix(37, 5, 2);
  const Eigen::VectorXd l = (Eigen::VectorXd(5) << 0.5, 1.0, 2.0, 4.0, 8.0).finished();
  CHECK(kernels::ard_exponential_symmetric(x, 1.7, l, Execution::Serial) ==
        kernels::ard_exponential_symmetric(x, 1.7, l, Execution::Parallel));
  CHECK(kernels::ard_exponential(x, y, 1.7, l, Execution::Serial) ==
        kernels::ard_exponential(x, y, 1.7, l, Execution::Parallel));
}

TEST_CASE("covariance: symmetric version equals the cross version on (x, x)") {
  const auto x = random_matrix(40, 3, 3);
  const Eigen::VectorXd l = Eigen::VectorXd::Constant(3, 1.3);
  const auto a = kernels::ard_exponential_symmetric(x, 2.0, l, Execution::Serial);
  const auto b = kernels::ard_exponential(x, x, 2.0, l, Execution::Serial);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.diagonal().isApproxToConstant(4.0));
}

TEST_CASE("length-scale traces: parallel, serial and the plain triple loop agree") {
  const auto x = random_matrix(60, 4, 4);
  const Eigen::VectorXd l = (Eigen::VectorXd(4) << 0.7, 1.1, 3.0, 0.4).finished();
  const auto k = kernels::ard_exponential_symmetric(x, 1.0, l, Execution::Serial);
  const Eigen::MatrixXd w = random_matrix(60, 60, 5);
  const auto serial = kernels::ard_length_scale_traces(x, k, w, l, Execution::Serial);
  const auto parallel = kernels::ard_length_scale_traces(x, k, w, l, Execution::Parallel);
  const auto reference = kernels::ard_length_scale_traces_reference(x, k, w, l);
  CHECK(serial == parallel);
  CHECK((serial - reference).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + reference.cwiseAbs().maxCoeff()));
}

TEST_CASE("length-scale derivative matrices reduce to the traces") {
  const auto x = random_matrix(30, 3, 6);
  const Eigen::VectorXd l = (Eigen::VectorXd(3) << 0.5, 1.5, 2.5).finished();
  const auto k = kernels::ard_exponential_symmetric(x, 1.0, l, Execution::Serial);
  const Eigen::MatrixXd w = random_matrix(30, 30, 7);
  const auto d = kernels::ard_length_scale_derivatives(x, k, l, Execution::Parallel);
  const auto t = kernels::ard_length_scale_traces_reference(x, k, w, l);
  REQUIRE(d.size() == 3);
  for (int m = 0; m < 3; ++m) CHECK(std::abs(w.cwiseProduct(d[m]).sum() - t(m)) < 1e-10);
}

TEST_CASE("length-scale derivatives match finite differences of the covariance") {
  const auto x = random_matrix(12, 2, 8);
  Eigen::VectorXd l = (Eigen::VectorXd(2) << 0.8, 1.9).finished();
  const auto k = kernels::ard_exponential_symmetric(x, 1.0, l, Execution::Serial);
  const auto d = kernels::ard_length_scale_derivatives(x, k, l, Execution::Serial);
  const double h = 1e-6;
  for (int m = 0; m < 2; ++m) {
    Eigen::VectorXd up = l, down = l;
    up(m) *= std::exp(h);
    down(m) *= std::exp(-h);
    const Eigen::MatrixXd fd = (kernels::ard_exponential_symmetric(x, 1.0, up, Execution::Serial) -
                                kernels::ard_exponential_symmetric(x, 1.0, down, Execution::Serial)) /
                               (2 * h);
    CHECK((fd - d[m]).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("batched ECM fits: parallel equals serial and per-curve fits") {
  auto profile = default_profile();
  profile.noise_sigma = 5e-4;
  profile.seed = 3;
  const auto cell = simulate_cell(profile, Protocol::nca_like(), 24, "k");
  std::vector<RelaxationCurve> curves;
  for (const auto& c : cell.cycles) curves.push_back(c.relaxation);
  const auto serial = kernels::fit_ecm_batch(curves, Execution::Serial);
  const auto parallel = kernels::fit_ecm_batch(curves, Execution::Parallel);
  REQUIRE(serial.size() == curves.size());
  for (std::size_t i = 0; i < curves.size(); ++i) {
    CHECK(serial[i].params == parallel[i].params);
    CHECK(serial[i].params == fit_ecm(curves[i]).params);
  }
}

TEST_CASE("for_each_index rethrows the first failure on the caller") {
  CHECK_THROWS_AS(for_each_index(50, Execution::Parallel,
                                 [](std::size_t i) {
                                   if (i == 17) throw std::runtime_error("boom");
                                 }),
                  std::runtime_error);
}
