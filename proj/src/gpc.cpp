#include "rulgp/gpc.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

#include "rulgp/errors.hpp"
#include "rulgp/kernels.hpp"
#include "rulgp/keyvalue.hpp"
#include "rulgp/optimize.hpp"

namespace rulgp {

namespace {

constexpr const char* kGpcTag = "rulgp-gpc";
constexpr const char* kDagTag = "rulgp-dag";
constexpr int kFormatVersion = 1;
constexpr double kStationarityTol = 1e-10;
constexpr double kStationarityAccept = 1e-8;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

struct LaplaceState {
  Eigen::VectorXd f, a, grad, w, sqrt_w;
  Eigen::LLT<Eigen::MatrixXd> b_factor;
  double psi = 0.0;  // log p(y|f) - f'K^-1 f / 2
  double residual = 0.0;
};

void likelihood_terms(const Eigen::VectorXd& f, const Eigen::VectorXd& y, LaplaceState& s) {
  const Eigen::Index n = f.size();
  s.grad.resize(n);
  s.w.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = sigmoid(f(i));
    s.grad(i) = 0.5 * (y(i) + 1.0) - pi;
    s.w(i) = pi * (1.0 - pi);
  }
  s.sqrt_w = s.w.cwiseSqrt();
}

double log_likelihood(const Eigen::VectorXd& f, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) s += log_sigmoid(y(i) * f(i));
  return s;
}

Eigen::LLT<Eigen::MatrixXd> factor_b(const Eigen::MatrixXd& k, const Eigen::VectorXd& sqrt_w) {
  Eigen::MatrixXd b = sqrt_w.asDiagonal() * k * sqrt_w.asDiagonal();
  b.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success) throw numerical_error("SingularKernel", "I + W^1/2 K W^1/2 is not positive definite");
  return llt;
}

// Newton iterations for the posterior mode, with step halving on psi.
LaplaceState find_mode(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, int max_iterations) {
  const Eigen::Index n = y.size();
  LaplaceState s;
  s.a = Eigen::VectorXd::Zero(n);
  s.f = Eigen::VectorXd::Zero(n);
  s.psi = log_likelihood(s.f, y);
  likelihood_terms(s.f, y, s);
  s.residual = (s.grad - s.a).norm();
  for (int it = 0; it < max_iterations && s.residual >= kStationarityTol; ++it) {
    const auto llt = factor_b(k, s.sqrt_w);
    const Eigen::VectorXd b = s.w.cwiseProduct(s.f) + s.grad;
    const Eigen::VectorXd kb = k * b;
    const Eigen::VectorXd a_new = b - s.sqrt_w.cwiseProduct(llt.solve(s.sqrt_w.cwiseProduct(kb)));
    const Eigen::VectorXd da = a_new - s.a;
    double step = 1.0;
    bool improved = false;
    for (int back = 0; back < 30; ++back) {
      const Eigen::VectorXd a_try = s.a + step * da;
      const Eigen::VectorXd f_try = k * a_try;
      const double psi_try = -0.5 * a_try.dot(f_try) + log_likelihood(f_try, y);
      if (psi_try >= s.psi) {
        s.a = a_try;
        s.f = f_try;
        s.psi = psi_try;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    likelihood_terms(s.f, y, s);
    s.residual = (s.grad - s.a).norm();
    if (!improved) break;
  }
  if (!(s.residual < kStationarityAccept)) {
    throw numerical_error("NoConvergence", "Laplace mode search stopped with gradient norm " +
                                               format_exact(s.residual));
  }
  s.b_factor = factor_b(k, s.sqrt_w);
  return s;
}

void check_labels(const Eigen::VectorXd& y) {
  bool pos = false, neg = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == 1.0) pos = true;
    else if (y(i) == -1.0) neg = true;
    else throw usage_error("InvalidLabel", "binary labels must be -1 or +1");
  }
  if (!pos || !neg) throw data_error("OneClassOnly", "binary classifier needs both classes in its training set");
}

Eigen::VectorXd read_labels(std::istream& in) { return read_vector(in, "labels"); }

}  // namespace

std::string_view to_string(LifetimeLabel label) {
  switch (label) {
    case LifetimeLabel::Short:
      return "Short";
    case LifetimeLabel::Medium:
      return "Medium";
    case LifetimeLabel::Long:
      return "Long";
  }
  return "?";
}

LifetimeLabel parse_lifetime_label(std::string_view text) {
  for (auto l : {LifetimeLabel::Short, LifetimeLabel::Medium, LifetimeLabel::Long}) {
    if (text == to_string(l)) return l;
  }
  throw data_error("SchemaError", "unknown lifetime label '" + std::string(text) + "'");
}

ThresholdPolicy ThresholdPolicy::for_chemistry(Chemistry chemistry) {
  return chemistry == Chemistry::NCA ? nca() : ncm();
}

void ThresholdPolicy::validate() const {
  if (!(upper_at_soh1 > lower_at_soh1 && lower_at_soh1 > 0.0)) {
    throw usage_error("InvalidThresholds", "thresholds need upper > lower > 0");
  }
}

Thresholds threshold(const ThresholdPolicy& policy, double soh) {
  policy.validate();
  if (!(soh > kDefaultSohEol)) {
    throw data_error("OutOfDomain", "thresholds are defined for SOH > 0.8, got " + format_exact(soh));
  }
  const double scale = (soh - kDefaultSohEol) / (1.0 - kDefaultSohEol);
  return {policy.upper_at_soh1 * scale, policy.lower_at_soh1 * scale};
}

LifetimeLabel label_sample(double rul, const Thresholds& thresholds) {
  if (rul > thresholds.upper) return LifetimeLabel::Long;
  if (rul < thresholds.lower) return LifetimeLabel::Short;
  return LifetimeLabel::Medium;
}

const std::array<std::pair<double, double>, 32>& gauss_hermite_32() {
  static const auto rule = [] {
    // Golub-Welsch: eigenvalues of the Jacobi matrix are the nodes, squared
    // first eigenvector components times sqrt(pi) the weights.
    constexpr int n = 32;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    std::array<std::pair<double, double>, 32> out{};
    for (int k = 0; k < n; ++k) {
      const double v0 = es.eigenvectors()(0, k);
      out[static_cast<std::size_t>(k)] = {es.eigenvalues()(k), std::sqrt(std::numbers::pi) * v0 * v0};
    }
    return out;
  }();
  return rule;
}

double expected_sigmoid(double mean, double variance) {
  const double s = std::sqrt(std::max(variance, 0.0));
  double total = 0.0;
  for (const auto& [x, w] : gauss_hermite_32()) total += w * sigmoid(mean + std::numbers::sqrt2 * s * x);
  return std::clamp(total / std::sqrt(std::numbers::pi), 0.0, 1.0);
}

LaplaceEvidence BinaryGpc::evidence(const Eigen::MatrixXd& xs, const Eigen::VectorXd& y, const KernelParams& kernel,
                                    int max_newton_iterations) {
  const Eigen::Index n = xs.rows(), d = xs.cols();
  const Eigen::MatrixXd k = kernels::ard_exponential_symmetric(xs, kernel.sigma_f, kernel.length_scales, Execution::Serial);
  const LaplaceState s = find_mode(k, y, max_newton_iterations);

  LaplaceEvidence out;
  const auto& l = s.b_factor.matrixLLT();
  out.value = -0.5 * s.a.dot(s.f) + log_likelihood(s.f, y) - l.diagonal().array().log().sum();

  // R = W^1/2 B^-1 W^1/2, C = L^-1 W^1/2 K.
  const Eigen::MatrixXd r = s.sqrt_w.asDiagonal() * s.b_factor.solve(Eigen::MatrixXd(s.sqrt_w.asDiagonal()));
  const Eigen::MatrixXd c = s.b_factor.matrixL().solve(s.sqrt_w.asDiagonal() * k);
  Eigen::VectorXd d3(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = sigmoid(s.f(i));
    d3(i) = -pi * (1.0 - pi) * (1.0 - 2.0 * pi);
  }
  // d(-log|B|/2)/df_i = -[(K^-1 + W)^-1]_ii dW_ii/df_i / 2, and dW_ii/df_i = -d3_i.
  const Eigen::VectorXd s2 = 0.5 * (k.diagonal() - c.colwise().squaredNorm().transpose()).cwiseProduct(d3);

  auto explicit_term = [&](const Eigen::MatrixXd& dk) {
    const double s1 = 0.5 * s.a.dot(dk * s.a) - 0.5 * (r.array() * dk.array()).sum();
    const Eigen::VectorXd b = dk * s.grad;
    const Eigen::VectorXd s3 = b - k * (r * b);
    return s1 + s2.dot(s3);
  };
  out.gradient.resize(d + 1);
  out.gradient(0) = explicit_term(2.0 * k);
  const auto dks = kernels::ard_length_scale_derivatives(xs, k, kernel.length_scales, Execution::Serial);
  for (Eigen::Index m = 0; m < d; ++m) out.gradient(1 + m) = explicit_term(dks[static_cast<std::size_t>(m)]);
  return out;
}

BinaryGpc BinaryGpc::train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpcConfig& config) {
  return train(x, y, Standardizer::fit(x), config);
}

BinaryGpc BinaryGpc::train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Standardizer& standardizer,
                           const GpcConfig& config) {
  if (x.rows() != y.size()) throw usage_error("DimensionMismatch", "feature rows and labels differ");
  if (!x.allFinite()) throw data_error("NonFiniteInput", "feature matrix contains non-finite entries");
  check_labels(y);
  const Eigen::Index d = x.cols();
  const Eigen::MatrixXd xs = standardizer.apply(x);

  Eigen::VectorXd lo(d + 1), hi(d + 1);
  lo(0) = std::log(0.1);
  hi(0) = std::log(100.0);
  lo.tail(d).setConstant(std::log(1e-2));
  hi.tail(d).setConstant(std::log(1e3));

  const int restarts = std::max(config.restarts, 1);
  std::vector<Eigen::VectorXd> starts;
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd theta(d + 1);
    if (r == 0) {
      theta(0) = std::log(2.0);
      theta.tail(d).setConstant(0.5 * std::log(static_cast<double>(d)));
    } else {
      std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      theta(0) = std::log(0.5) + u(rng) * std::log(20.0);
      for (Eigen::Index m = 0; m < d; ++m) theta(1 + m) = std::log(0.3) + u(rng) * std::log(10.0 / 0.3);
    }
    starts.push_back(theta);
  }
  auto to_kernel = [d](const Eigen::VectorXd& t) {
    KernelParams k;
    k.sigma_f = std::exp(t(0));
    k.length_scales = t.tail(d).array().exp().matrix();
    return k;
  };
  const SmoothObjective objective = [&](const Eigen::VectorXd& t, double& value, Eigen::VectorXd& gradient) {
    try {
      auto ev = evidence(xs, y, to_kernel(t), config.max_newton_iterations);
      value = ev.value;
      gradient = std::move(ev.gradient);
      return true;
    } catch (const Error&) {
      return false;
    }
  };
  std::vector<AscentResult> results(starts.size());
  for_each_index(starts.size(), config.exec, [&](std::size_t r) {
    results[r] = maximize_in_box(objective, starts[r], lo, hi, config.max_iterations, config.tolerance);
  });
  std::size_t best = results.size();
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!std::isfinite(results[r].value)) continue;
    if (best == results.size() || results[r].value > results[best].value) best = r;
  }
  if (best == results.size()) throw numerical_error("NoConvergence", "no restart found a Laplace posterior mode");
  return condition(x, y, to_kernel(results[best].theta), standardizer, config.max_newton_iterations);
}

BinaryGpc BinaryGpc::condition(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelParams& kernel,
                               const Standardizer& standardizer, int max_newton_iterations) {
  if (x.rows() != y.size() || kernel.dimension() != x.cols()) {
    throw usage_error("DimensionMismatch", "inputs, labels and kernel disagree");
  }
  check_labels(y);
  BinaryGpc model;
  model.kernel_ = kernel;
  model.kernel_.sigma_n = 0.0;
  model.kernel_.validate();
  model.standardizer_ = standardizer;
  model.x_ = standardizer.apply(x);
  model.y_ = y;
  model.refit(max_newton_iterations);
  return model;
}

void BinaryGpc::refit(int max_newton_iterations) {
  k_ = kernels::ard_exponential_symmetric(x_, kernel_.sigma_f, kernel_.length_scales, Execution::Serial);
  LaplaceState s = find_mode(k_, y_, max_newton_iterations);
  f_hat_ = std::move(s.f);
  a_ = std::move(s.a);
  grad_log_lik_ = std::move(s.grad);
  sqrt_w_ = std::move(s.sqrt_w);
  b_factor_ = std::move(s.b_factor);
}

double BinaryGpc::stationarity_residual() const {
  // d/df [log p(y|f) - f'K^-1 f / 2] = grad - K^-1 f, with f = K a.
  return (grad_log_lik_ - a_).norm();
}

LatentPrediction BinaryGpc::latent(std::span<const double> x_star) const {
  if (static_cast<Eigen::Index>(x_star.size()) != x_.cols()) {
    throw usage_error("DimensionMismatch", "expected " + std::to_string(x_.cols()) + " features, got " +
                                               std::to_string(x_star.size()));
  }
  Eigen::MatrixXd row(1, x_.cols());
  for (Eigen::Index m = 0; m < x_.cols(); ++m) row(0, m) = x_star[static_cast<std::size_t>(m)];
  const Eigen::MatrixXd xs = standardizer_.apply(row);
  const Eigen::VectorXd ks =
      kernels::ard_exponential(x_, xs, kernel_.sigma_f, kernel_.length_scales, Execution::Serial).col(0);
  LatentPrediction out;
  out.mean = ks.dot(grad_log_lik_);
  const Eigen::VectorXd v = b_factor_.matrixL().solve(sqrt_w_.cwiseProduct(ks));
  out.variance = std::max(kernel_.sigma_f * kernel_.sigma_f - v.squaredNorm(), 0.0);
  return out;
}

double BinaryGpc::predict(std::span<const double> x_star) const {
  const auto l = latent(x_star);
  return expected_sigmoid(l.mean, l.variance);
}

Eigen::VectorXd BinaryGpc::predict(const Eigen::MatrixXd& x_star) const {
  Eigen::VectorXd out(x_star.rows());
  std::vector<double> row(static_cast<std::size_t>(x_star.cols()));
  for (Eigen::Index i = 0; i < x_star.rows(); ++i) {
    for (Eigen::Index m = 0; m < x_star.cols(); ++m) row[static_cast<std::size_t>(m)] = x_star(i, m);
    out(i) = predict(row);
  }
  return out;
}

void BinaryGpc::save(std::ostream& out) const {
  out << kGpcTag << ' ' << kFormatVersion << '\n';
  out << "sigma_f " << format_exact(kernel_.sigma_f) << '\n';
  write_vector(out, "length_scales", kernel_.length_scales);
  write_vector(out, "feature_mean", standardizer_.mean);
  write_vector(out, "feature_scale", standardizer_.scale);
  write_matrix(out, "x_train", x_);
  write_vector(out, "labels", y_);
}

BinaryGpc BinaryGpc::load(std::istream& in) {
  expect_token(in, kGpcTag);
  expect_token(in, std::to_string(kFormatVersion));
  BinaryGpc model;
  model.kernel_.sigma_f = read_scalar(in, "sigma_f");
  model.kernel_.length_scales = read_vector(in, "length_scales");
  model.standardizer_.mean = read_vector(in, "feature_mean");
  model.standardizer_.scale = read_vector(in, "feature_scale");
  model.x_ = read_matrix(in, "x_train");
  model.y_ = read_labels(in);
  model.kernel_.validate();
  const auto d = model.kernel_.dimension();
  if (model.standardizer_.mean.size() != d || model.standardizer_.scale.size() != d || model.x_.cols() != d ||
      model.x_.rows() != model.y_.size()) {
    throw data_error("SchemaError", "classifier file: inconsistent dimensions");
  }
  check_labels(model.y_);
  model.refit(100);
  return model;
}

DagDecision route(double p_long, double p_long_vs_medium, double p_short_vs_medium) {
  DagDecision out;
  out.stage1_long = p_long;
  if (p_long > 0.5) {
    if (p_long_vs_medium > 0.5) {
      out.label = LifetimeLabel::Long;
      out.probability = p_long_vs_medium;
    } else {
      out.label = LifetimeLabel::Medium;
      out.probability = 1.0 - p_long_vs_medium;
    }
  } else {
    if (p_short_vs_medium > 0.5) {
      out.label = LifetimeLabel::Short;
      out.probability = p_short_vs_medium;
    } else {
      out.label = LifetimeLabel::Medium;
      out.probability = 1.0 - p_short_vs_medium;
    }
  }
  return out;
}

LifeDag LifeDag::train(const Eigen::MatrixXd& x, const std::vector<LifetimeLabel>& labels, const GpcConfig& config) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw usage_error("DimensionMismatch", "feature rows and labels differ");
  }
  LifeDag dag;
  dag.standardizer_ = Standardizer::fit(x);

  // stage 1: Long (+1) vs Short (-1); stage 2: Long or Short (+1) vs Medium (-1).
  struct Task {
    LifetimeLabel positive, negative;
    const char* name;
  };
  const std::array<Task, 3> tasks = {Task{LifetimeLabel::Long, LifetimeLabel::Short, "short-vs-long"},
                                     Task{LifetimeLabel::Long, LifetimeLabel::Medium, "long-vs-medium"},
                                     Task{LifetimeLabel::Short, LifetimeLabel::Medium, "short-vs-medium"}};
  std::array<BinaryGpc*, 3> slots = {&dag.stage1_, &dag.stage2_long_, &dag.stage2_short_};
  for (const auto& task : tasks) {
    const auto pos = std::count(labels.begin(), labels.end(), task.positive);
    const auto neg = std::count(labels.begin(), labels.end(), task.negative);
    if (pos == 0 || neg == 0) {
      throw data_error("OneClassOnly", std::string(task.name) + " classifier has " + std::to_string(pos) + " " +
                                           std::string(to_string(task.positive)) + " and " + std::to_string(neg) +
                                           " " + std::string(to_string(task.negative)) + " samples");
    }
  }
  for_each_index(tasks.size(), config.exec, [&](std::size_t t) {
    const auto& task = tasks[t];
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == task.positive || labels[i] == task.negative) rows.push_back(static_cast<Eigen::Index>(i));
    }
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(rows.size()), x.cols());
    Eigen::VectorXd ys(xs.rows());
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
      const auto i = rows[static_cast<std::size_t>(r)];
      xs.row(r) = x.row(i);
      ys(r) = labels[static_cast<std::size_t>(i)] == task.positive ? 1.0 : -1.0;
    }
    GpcConfig cfg = config;
    cfg.seed = config.seed + t;
    *slots[t] = BinaryGpc::train(xs, ys, dag.standardizer_, cfg);
  });
  return dag;
}

DagDecision LifeDag::classify(std::span<const double> x_star) const {
  const double p1 = stage1_.predict(x_star);
  // Only the chosen branch is consulted.
  if (p1 > 0.5) return route(p1, stage2_long_.predict(x_star), 0.0);
  return route(p1, 0.0, stage2_short_.predict(x_star));
}

std::vector<DagDecision> LifeDag::classify(const Eigen::MatrixXd& x_star) const {
  std::vector<DagDecision> out(static_cast<std::size_t>(x_star.rows()));
  for_each_index(out.size(), Execution::Parallel, [&](std::size_t i) {
    std::vector<double> row(static_cast<std::size_t>(x_star.cols()));
    for (Eigen::Index m = 0; m < x_star.cols(); ++m) row[static_cast<std::size_t>(m)] = x_star(static_cast<Eigen::Index>(i), m);
    out[i] = classify(row);
  });
  return out;
}

void LifeDag::save(std::ostream& out) const {
  out << kDagTag << ' ' << kFormatVersion << '\n';
  write_metadata(out, metadata);
  write_vector(out, "feature_mean", standardizer_.mean);
  write_vector(out, "feature_scale", standardizer_.scale);
  out << "stage1\n";
  stage1_.save(out);
  out << "stage2_long\n";
  stage2_long_.save(out);
  out << "stage2_short\n";
  stage2_short_.save(out);
}

void LifeDag::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw data_error("FileNotFound", "cannot write " + path.string());
  save(out);
}

LifeDag LifeDag::load(std::istream& in) {
  expect_token(in, kDagTag);
  expect_token(in, std::to_string(kFormatVersion));
  LifeDag dag;
  dag.metadata = read_metadata(in);
  dag.standardizer_.mean = read_vector(in, "feature_mean");
  dag.standardizer_.scale = read_vector(in, "feature_scale");
  expect_token(in, "stage1");
  dag.stage1_ = BinaryGpc::load(in);
  expect_token(in, "stage2_long");
  dag.stage2_long_ = BinaryGpc::load(in);
  expect_token(in, "stage2_short");
  dag.stage2_short_ = BinaryGpc::load(in);
  return dag;
}

LifeDag LifeDag::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("FileNotFound", "cannot read " + path.string());
  return load(in);
}

}  // namespace rulgp
