#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rulgp/dataset.hpp"
#include "rulgp/gpr.hpp"

namespace rulgp {

enum class LifetimeLabel { Short, Medium, Long };

std::string_view to_string(LifetimeLabel label);
LifetimeLabel parse_lifetime_label(std::string_view text);

/// Cycle-life thresholds at SOH = 1, scaled linearly to 0 at SOH = 0.8.
struct ThresholdPolicy {
  double upper_at_soh1 = 450.0;
  double lower_at_soh1 = 180.0;

  static ThresholdPolicy nca() { return {450.0, 180.0}; }
  static ThresholdPolicy ncm() { return {800.0, 200.0}; }
  /// NCM+NCA has no published thresholds and falls back to the NCM pair.
  static ThresholdPolicy for_chemistry(Chemistry chemistry);
  void validate() const;
};

struct Thresholds {
  double upper = 0.0;
  double lower = 0.0;
};

/// Throws OutOfDomain for soh <= 0.8.
Thresholds threshold(const ThresholdPolicy& policy, double soh);
/// Long if rul > upper, Short if rul < lower, Medium otherwise.
LifetimeLabel label_sample(double rul, const Thresholds& thresholds);

/// 32-node Gauss-Hermite rule for integrals of exp(-x^2) g(x).
const std::array<std::pair<double, double>, 32>& gauss_hermite_32();

/// E[sigmoid(f)] for f ~ N(mean, variance), by Gauss-Hermite quadrature.
double expected_sigmoid(double mean, double variance);

struct GpcConfig {
  int restarts = 3;
  int max_iterations = 200;  // hyperparameter ascent
  double tolerance = 1e-8;
  int max_newton_iterations = 100;
  std::uint64_t seed = 0;
  Execution exec = Execution::Parallel;
};

/// Latent posterior summary at x*.
struct LatentPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Laplace-approximate marginal likelihood and its gradient with respect to
/// [ln sigma_f, ln l_1 .. ln l_d].
struct LaplaceEvidence {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// Binary GP classifier with a logistic link under the Laplace
/// approximation. Labels are -1 / +1; predictions are P(y = +1).
class BinaryGpc {
 public:
  static BinaryGpc train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Standardizer& standardizer,
                         const GpcConfig& config = {});
  static BinaryGpc train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpcConfig& config = {});
  /// Fixed hyperparameters (sigma_n is ignored).
  static BinaryGpc condition(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelParams& kernel,
                             const Standardizer& standardizer, int max_newton_iterations = 100);

  /// Evidence on standardized inputs; throws NoConvergence if the mode
  /// search fails.
  static LaplaceEvidence evidence(const Eigen::MatrixXd& xs, const Eigen::VectorXd& y, const KernelParams& kernel,
                                  int max_newton_iterations = 100);

  LatentPrediction latent(std::span<const double> x_star) const;
  double predict(std::span<const double> x_star) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x_star) const;

  const KernelParams& kernel() const { return kernel_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const Eigen::MatrixXd& x_train() const { return x_; }
  const Eigen::VectorXd& labels() const { return y_; }
  const Eigen::VectorXd& mode() const { return f_hat_; }
  /// || d/df log p(f | X, y) || at the stored mode.
  double stationarity_residual() const;
  Eigen::Index dimension() const { return x_.cols(); }

  void save(std::ostream& out) const;
  static BinaryGpc load(std::istream& in);

 private:
  void refit(int max_newton_iterations);

  KernelParams kernel_;
  Standardizer standardizer_;
  Eigen::MatrixXd x_;  // standardized
  Eigen::VectorXd y_;
  Eigen::VectorXd f_hat_;
  Eigen::VectorXd grad_log_lik_;
  Eigen::VectorXd a_;  // K^-1 f_hat
  Eigen::VectorXd sqrt_w_;
  Eigen::MatrixXd k_;
  Eigen::LLT<Eigen::MatrixXd> b_factor_;  // I + W^1/2 K W^1/2
};

struct DagDecision {
  LifetimeLabel label = LifetimeLabel::Medium;
  double probability = 0.0;  // stage-2 probability of the chosen label
  double stage1_long = 0.0;  // stage-1 probability of the long branch
};

/// Routes stage probabilities through the graph. `p_long` is the stage-1
/// probability of Long versus Short; `p_long_vs_medium` and
/// `p_short_vs_medium` are the stage-2 probabilities of Long (resp. Short)
/// against Medium. Exact 0.5 goes to the short branch at stage 1 and to
/// Medium at stage 2.
DagDecision route(double p_long, double p_long_vs_medium, double p_short_vs_medium);

/// Two-stage classifier: short vs long, then the winning side against
/// medium.
class LifeDag {
 public:
  static LifeDag train(const Eigen::MatrixXd& x, const std::vector<LifetimeLabel>& labels,
                       const GpcConfig& config = {});

  DagDecision classify(std::span<const double> x_star) const;
  std::vector<DagDecision> classify(const Eigen::MatrixXd& x_star) const;

  const BinaryGpc& stage1() const { return stage1_; }
  const BinaryGpc& stage2_long() const { return stage2_long_; }
  const BinaryGpc& stage2_short() const { return stage2_short_; }
  const Standardizer& standardizer() const { return standardizer_; }

  std::map<std::string, std::string> metadata;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static LifeDag load(std::istream& in);
  static LifeDag load(const std::filesystem::path& path);

 private:
  Standardizer standardizer_;
  BinaryGpc stage1_, stage2_long_, stage2_short_;
};

}  // namespace rulgp
