#include "rulgp/gpr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "rulgp/errors.hpp"
#include "rulgp/kernels.hpp"
#include "rulgp/keyvalue.hpp"
#include "rulgp/optimize.hpp"

namespace rulgp {

namespace {

constexpr const char* kFormatTag = "rulgp-gpr";
constexpr int kFormatVersion = 1;

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw data_error("NonFiniteInput", std::string(what) + " contains non-finite entries");
}

// Box in log-parameter space, relative to the target scale s.
struct LogBounds {
  Eigen::VectorXd lo, hi;

  LogBounds(Eigen::Index d, double s) : lo(d + 2), hi(d + 2) {
    const double ls = std::log(s);
    lo(0) = ls + std::log(1e-2);
    hi(0) = ls + std::log(1e2);
    lo.segment(1, d).setConstant(std::log(1e-2));
    hi.segment(1, d).setConstant(std::log(1e3));
    lo(d + 1) = ls + std::log(1e-6);
    hi(d + 1) = ls;
  }
};

AscentResult ascend(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& start,
                    const LogBounds& bounds, const GprConfig& config) {
  const SmoothObjective objective = [&](const Eigen::VectorXd& t, double& value, Eigen::VectorXd& gradient) {
    try {
      auto lml = log_marginal_likelihood(x, y, KernelParams::from_log(t), Execution::Serial);
      value = lml.value;
      gradient = std::move(lml.gradient);
      return true;
    } catch (const Error&) {
      return false;
    }
  };
  return maximize_in_box(objective, start, bounds.lo, bounds.hi, config.max_iterations, config.tolerance);
}

}  // namespace

void KernelParams::validate() const {
  if (!(sigma_f > 0.0) || !std::isfinite(sigma_f)) throw usage_error("InvalidKernel", "sigma_f must be positive");
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) throw usage_error("InvalidKernel", "sigma_n must be >= 0");
  for (Eigen::Index m = 0; m < length_scales.size(); ++m) {
    if (!(length_scales(m) > 0.0) || !std::isfinite(length_scales(m))) {
      throw usage_error("InvalidKernel", "length scales must be positive");
    }
  }
}

Eigen::VectorXd KernelParams::to_log() const {
  const auto d = length_scales.size();
  Eigen::VectorXd theta(d + 2);
  theta(0) = std::log(sigma_f);
  theta.segment(1, d) = length_scales.array().log().matrix();
  theta(d + 1) = std::log(sigma_n);
  return theta;
}

KernelParams KernelParams::from_log(const Eigen::VectorXd& theta) {
  const auto d = theta.size() - 2;
  KernelParams k;
  k.sigma_f = std::exp(theta(0));
  k.length_scales = theta.segment(1, d).array().exp().matrix();
  k.sigma_n = std::exp(theta(d + 1));
  return k;
}

double kernel_eval(std::span<const double> x_i, std::span<const double> x_j, const KernelParams& k) {
  if (x_i.size() != x_j.size() || static_cast<Eigen::Index>(x_i.size()) != k.dimension()) {
    throw usage_error("DimensionMismatch", "kernel inputs have " + std::to_string(x_i.size()) + " and " +
                                               std::to_string(x_j.size()) + " features, kernel has " +
                                               std::to_string(k.dimension()));
  }
  double r2 = 0.0;
  for (std::size_t m = 0; m < x_i.size(); ++m) {
    const double d = (x_i[m] - x_j[m]) / k.length_scales(static_cast<Eigen::Index>(m));
    r2 += d * d;
  }
  return k.sigma_f * k.sigma_f * std::exp(-std::sqrt(r2));
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index m = 0; m < x.cols(); ++m) {
    const double var = (x.col(m).array() - s.mean(m)).square().sum() / std::max(n - 1.0, 1.0);
    s.scale(m) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(Eigen::Index d) {
  return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d)};
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) {
    throw usage_error("DimensionMismatch", "expected " + std::to_string(mean.size()) + " features, got " +
                                               std::to_string(x.cols()));
  }
  return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

JitteredFactor factorize_with_jitter(const Eigen::MatrixXd& k, double scale) {
  const Eigen::Index n = k.rows();
  for (double j = kBaseJitter; j <= kMaxJitter * 1.0000001; j *= 10.0) {
    JitteredFactor f;
    f.jitter = j * scale;
    Eigen::MatrixXd reg = k;
    reg.diagonal().array() += f.jitter;
    f.llt.compute(reg);
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().minCoeff() > 0.0) return f;
  }
  throw numerical_error("SingularKernel", "covariance of " + std::to_string(n) +
                                               " points is not positive definite even with jitter " +
                                               format_exact(kMaxJitter) + " * sigma_f^2");
}

LogMarginal log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelParams& k,
                                    Execution exec) {
  k.validate();
  const Eigen::Index n = x.rows(), d = x.cols();
  if (y.size() != n || k.dimension() != d) throw usage_error("DimensionMismatch", "inputs, targets and kernel disagree");
  const double sf2 = k.sigma_f * k.sigma_f, sn2 = k.sigma_n * k.sigma_n;
  Eigen::MatrixXd kf = kernels::ard_exponential_symmetric(x, k.sigma_f, k.length_scales, exec);
  Eigen::MatrixXd kn = kf;
  kn.diagonal().array() += sn2;
  const JitteredFactor f = factorize_with_jitter(kn, sf2);
  const Eigen::VectorXd alpha = f.llt.solve(y);

  LogMarginal out;
  const auto& lmat = f.llt.matrixLLT();
  out.value = -0.5 * y.dot(alpha) - lmat.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  Eigen::MatrixXd w = alpha * alpha.transpose() - f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  out.gradient.resize(d + 2);
  // dK/dln sigma_f = 2 (K_f + jitter I); the jitter scales with sigma_f^2.
  out.gradient(0) = (w.array() * kf.array()).sum() + f.jitter * w.trace();
  out.gradient.segment(1, d) = 0.5 * kernels::ard_length_scale_traces(x, kf, w, k.length_scales, exec);
  out.gradient(d + 1) = sn2 * w.trace();
  return out;
}

GprModel GprModel::train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GprConfig& config) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 2) throw data_error("InsufficientData", "regression needs at least 2 samples, got " + std::to_string(n));
  if (y.size() != n) throw usage_error("DimensionMismatch", "feature rows and targets differ");
  if (d < 1) throw usage_error("DimensionMismatch", "no features");
  check_finite(x, "feature matrix");
  check_finite(y, "targets");
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;
  const double y_std = std::sqrt(yc.squaredNorm() / static_cast<double>(n - 1));
  if (!(y_std > 0.0)) throw data_error("DegenerateTargets", "all targets are equal");

  const Standardizer stdz = Standardizer::fit(x);
  const Eigen::MatrixXd xs = stdz.apply(x);
  const LogBounds bounds(d, y_std);
  const int restarts = std::max(config.restarts, 1);

  std::vector<Eigen::VectorXd> starts(static_cast<std::size_t>(restarts));
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd theta(d + 2);
    if (r == 0) {
      theta(0) = std::log(y_std);
      theta.segment(1, d).setConstant(0.5 * std::log(static_cast<double>(d)));
      theta(d + 1) = std::log(0.1 * y_std);
    } else {
      std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      theta(0) = std::log(y_std) + (2.0 * u(rng) - 1.0);
      for (Eigen::Index m = 0; m < d; ++m) theta(1 + m) = std::log(0.3) + u(rng) * std::log(10.0 / 0.3);
      theta(d + 1) = std::log(y_std) + std::log(1e-3) + u(rng) * std::log(0.3 / 1e-3);
    }
    starts[static_cast<std::size_t>(r)] = theta;
  }
  std::vector<AscentResult> results(starts.size());
  for_each_index(starts.size(), config.exec,
                 [&](std::size_t r) { results[r] = ascend(xs, yc, starts[r], bounds, config); });
  std::size_t best = results.size();
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!std::isfinite(results[r].value)) continue;
    if (best == results.size() || results[r].value > results[best].value) best = r;
  }
  if (best == results.size()) {
    throw numerical_error("SingularKernel", "no restart produced a factorizable covariance");
  }
  GprModel model = condition(x, y, KernelParams::from_log(results[best].theta), stdz, true);
  model.lml_ = results[best].value;
  return model;
}

GprModel GprModel::condition(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelParams& kernel,
                             const Standardizer& standardizer, bool center_targets) {
  kernel.validate();
  if (y.size() != x.rows() || kernel.dimension() != x.cols()) {
    throw usage_error("DimensionMismatch", "inputs, targets and kernel disagree");
  }
  check_finite(x, "feature matrix");
  check_finite(y, "targets");
  GprModel model;
  model.kernel_ = kernel;
  model.standardizer_ = standardizer;
  model.x_ = standardizer.apply(x);
  model.y_ = y;
  model.y_offset_ = center_targets && y.size() > 0 ? y.mean() : 0.0;
  model.refactor();
  return model;
}

void GprModel::refactor() {
  const double sf2 = kernel_.sigma_f * kernel_.sigma_f;
  Eigen::MatrixXd k = kernels::ard_exponential_symmetric(x_, kernel_.sigma_f, kernel_.length_scales, Execution::Serial);
  k.diagonal().array() += kernel_.sigma_n * kernel_.sigma_n;
  factor_ = factorize_with_jitter(k, sf2);
  const Eigen::VectorXd yc = y_.array() - y_offset_;
  alpha_ = factor_.llt.solve(yc);
  const auto& l = factor_.llt.matrixLLT();
  lml_ = -0.5 * yc.dot(alpha_) - l.diagonal().array().log().sum() -
         0.5 * static_cast<double>(y_.size()) * std::log(2.0 * std::numbers::pi);
}

GprPrediction GprModel::predict(const Eigen::MatrixXd& x_star, Execution exec) const {
  GprPrediction out;
  if (x_star.rows() == 0) {
    out.mean.resize(0);
    out.variance.resize(0);
    return out;
  }
  const Eigen::MatrixXd xs = standardizer_.apply(x_star);
  const Eigen::MatrixXd ks = kernels::ard_exponential(x_, xs, kernel_.sigma_f, kernel_.length_scales, exec);
  out.mean = (ks.transpose() * alpha_).array() + y_offset_;
  const Eigen::MatrixXd v = factor_.llt.matrixL().solve(ks);
  const double prior = kernel_.sigma_f * kernel_.sigma_f + kernel_.sigma_n * kernel_.sigma_n;
  out.variance = (prior - v.colwise().squaredNorm().array()).matrix().transpose();
  for (Eigen::Index i = 0; i < out.variance.size(); ++i) {
    if (out.variance(i) < 0.0) {
      if (out.variance(i) < -1e-8) out.clamped = true;
      out.variance(i) = 0.0;
    }
  }
  return out;
}

Eigen::VectorXd GprModel::relative_importance() const {
  return kernel_.length_scales / kernel_.length_scales.sum();
}

Eigen::VectorXd GprModel::inverse_length_importance() const {
  const Eigen::VectorXd inv = kernel_.length_scales.cwiseInverse();
  return inv / inv.sum();
}

// Serialization.

void write_vector(std::ostream& out, const std::string& key, const Eigen::VectorXd& v) {
  out << key << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_exact(v(i));
  out << '\n';
}

void write_matrix(std::ostream& out, const std::string& key, const Eigen::MatrixXd& m) {
  out << key << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_exact(m(i, j));
    out << '\n';
  }
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw data_error("SchemaError", "model file: expected '" + token + "', found '" + got + "'");
  }
}

namespace {

double next_double(std::istream& in, const std::string& key) {
  std::string tok;
  if (!(in >> tok)) throw data_error("SchemaError", "model file: truncated at '" + key + "'");
  return parse_double(tok, key);
}

Eigen::Index next_size(std::istream& in, const std::string& key) {
  std::string tok;
  if (!(in >> tok)) throw data_error("SchemaError", "model file: truncated at '" + key + "'");
  const auto v = parse_integer(tok, key);
  if (v < 0) throw data_error("SchemaError", "model file: negative size for '" + key + "'");
  return static_cast<Eigen::Index>(v);
}

}  // namespace

double read_scalar(std::istream& in, const std::string& key) {
  expect_token(in, key);
  return next_double(in, key);
}

Eigen::VectorXd read_vector(std::istream& in, const std::string& key) {
  expect_token(in, key);
  Eigen::VectorXd v(next_size(in, key));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = next_double(in, key);
  return v;
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& key) {
  expect_token(in, key);
  const auto rows = next_size(in, key);
  const auto cols = next_size(in, key);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = next_double(in, key);
  }
  return m;
}

void write_metadata(std::ostream& out, const std::map<std::string, std::string>& meta) {
  out << "metadata " << meta.size() << '\n';
  for (const auto& [k, v] : meta) out << k << " = " << v << '\n';
}

std::map<std::string, std::string> read_metadata(std::istream& in) {
  expect_token(in, "metadata");
  const auto count = next_size(in, "metadata");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::string> meta;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw data_error("SchemaError", "model file: truncated metadata");
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw data_error("SchemaError", "model file: bad metadata line '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return meta;
}

void GprModel::save(std::ostream& out) const {
  out << kFormatTag << ' ' << kFormatVersion << '\n';
  write_metadata(out, metadata);
  out << "sigma_f " << format_exact(kernel_.sigma_f) << '\n';
  out << "sigma_n " << format_exact(kernel_.sigma_n) << '\n';
  write_vector(out, "length_scales", kernel_.length_scales);
  write_vector(out, "feature_mean", standardizer_.mean);
  write_vector(out, "feature_scale", standardizer_.scale);
  out << "target_offset " << format_exact(y_offset_) << '\n';
  write_matrix(out, "x_train", x_);
  write_vector(out, "y_train", y_);
}

void GprModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw data_error("FileNotFound", "cannot write " + path.string());
  save(out);
}

GprModel GprModel::load(std::istream& in) {
  expect_token(in, kFormatTag);
  const auto version = next_size(in, "version");
  if (version != kFormatVersion) {
    throw data_error("SchemaError", "unsupported model format version " + std::to_string(version));
  }
  GprModel model;
  model.metadata = read_metadata(in);
  model.kernel_.sigma_f = read_scalar(in, "sigma_f");
  model.kernel_.sigma_n = read_scalar(in, "sigma_n");
  model.kernel_.length_scales = read_vector(in, "length_scales");
  model.standardizer_.mean = read_vector(in, "feature_mean");
  model.standardizer_.scale = read_vector(in, "feature_scale");
  model.y_offset_ = read_scalar(in, "target_offset");
  model.x_ = read_matrix(in, "x_train");
  model.y_ = read_vector(in, "y_train");
  model.kernel_.validate();
  const auto d = model.kernel_.dimension();
  if (model.standardizer_.mean.size() != d || model.standardizer_.scale.size() != d || model.x_.cols() != d ||
      model.x_.rows() != model.y_.size()) {
    throw data_error("SchemaError", "model file: inconsistent dimensions");
  }
  model.refactor();
  return model;
}

GprModel GprModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("FileNotFound", "cannot read " + path.string());
  return load(in);
}

}  // namespace rulgp
