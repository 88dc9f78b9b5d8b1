#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rulgp/parallel.hpp"

namespace rulgp {

/// Hyperparameters of sigma_f^2 * exp(-|| (x_i - x_j) / l ||) plus i.i.d.
/// observation noise sigma_n.
struct KernelParams {
  double sigma_f = 1.0;
  Eigen::VectorXd length_scales;
  double sigma_n = 0.0;

  Eigen::Index dimension() const { return length_scales.size(); }
  void validate() const;
  /// [ln sigma_f, ln l_1 .. ln l_d, ln sigma_n]
  Eigen::VectorXd to_log() const;
  static KernelParams from_log(const Eigen::VectorXd& theta);
};

double kernel_eval(std::span<const double> x_i, std::span<const double> x_j, const KernelParams& k);

/// Per-feature affine map to zero mean and unit variance. Constant features
/// keep scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  static Standardizer identity(Eigen::Index d);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

inline constexpr double kBaseJitter = 1e-9;  // times sigma_f^2
inline constexpr double kMaxJitter = 1e-6;

/// Cholesky factor of a covariance matrix, with the diagonal jitter that was
/// needed to obtain it.
struct JitteredFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // absolute, added to the diagonal
};

/// Factorizes k + j*I for j = kBaseJitter*scale, 10x larger, ... up to
/// kMaxJitter*scale. Throws SingularKernel when all fail.
JitteredFactor factorize_with_jitter(const Eigen::MatrixXd& k, double scale);

struct LogMarginal {
  double value = 0.0;
  Eigen::VectorXd gradient;  // with respect to KernelParams::to_log()
};

/// Log marginal likelihood of targets `y` (already centered) under the
/// kernel at `x`, and its analytic gradient.
LogMarginal log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelParams& k,
                                    Execution exec = Execution::Serial);

struct GprConfig {
  int restarts = 5;
  int max_iterations = 500;
  double tolerance = 1e-8;  // on |delta lml|
  std::uint64_t seed = 0;
  Execution exec = Execution::Parallel;
};

struct GprPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  bool clamped = false;  // a variance below -1e-8 was clamped to 0
};

class GprModel {
 public:
  /// Standardizes features, centers targets and maximizes the log marginal
  /// likelihood over the hyperparameters.
  static GprModel train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GprConfig& config = {});
  /// Fixed hyperparameters; `standardizer` is applied to x here and at
  /// prediction time.
  static GprModel condition(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelParams& kernel,
                            const Standardizer& standardizer, bool center_targets = true);

  GprPrediction predict(const Eigen::MatrixXd& x_star, Execution exec = Execution::Serial) const;

  /// w_m = l_m / sum(l).
  Eigen::VectorXd relative_importance() const;
  /// w_m = (1/l_m) / sum(1/l), the usual ARD relevance reading.
  Eigen::VectorXd inverse_length_importance() const;

  const KernelParams& kernel() const { return kernel_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const Eigen::MatrixXd& x_train() const { return x_; }  // standardized
  const Eigen::VectorXd& y_train() const { return y_; }  // raw targets
  double target_offset() const { return y_offset_; }
  double jitter() const { return factor_.jitter; }
  double log_marginal() const { return lml_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return factor_.llt; }

  /// Free-form annotations carried through serialization.
  std::map<std::string, std::string> metadata;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static GprModel load(std::istream& in);
  static GprModel load(const std::filesystem::path& path);

 private:
  void refactor();

  KernelParams kernel_;
  Standardizer standardizer_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  double y_offset_ = 0.0;
  JitteredFactor factor_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

// Serialization helpers shared with the classifier.
void write_vector(std::ostream& out, const std::string& key, const Eigen::VectorXd& v);
void write_matrix(std::ostream& out, const std::string& key, const Eigen::MatrixXd& m);
Eigen::VectorXd read_vector(std::istream& in, const std::string& key);
Eigen::MatrixXd read_matrix(std::istream& in, const std::string& key);
double read_scalar(std::istream& in, const std::string& key);
void expect_token(std::istream& in, const std::string& token);
void write_metadata(std::ostream& out, const std::map<std::string, std::string>& meta);
std::map<std::string, std::string> read_metadata(std::istream& in);

}  // namespace rulgp
