#pragma once

// Data-parallel inner loops. Every kernel takes an Execution policy; the
// Serial path is the reference implementation the OpenMP path is tested
// against (see tests/test_kernels.cpp and bench/bench_kernels.cpp).

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "rulgp/ecm.hpp"
#include "rulgp/parallel.hpp"

namespace rulgp::kernels {

/// Cross-covariance of the exponential ARD kernel between the rows of `a`
/// and the rows of `b`: sigma_f^2 * exp(-|| (a_i - b_j) / l ||).
Eigen::MatrixXd ard_exponential(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sigma_f,
                                const Eigen::VectorXd& length_scales, Execution exec);

/// Symmetric covariance of the rows of `x` with itself (upper triangle
/// computed, mirrored).
Eigen::MatrixXd ard_exponential_symmetric(const Eigen::MatrixXd& x, double sigma_f,
                                          const Eigen::VectorXd& length_scales, Execution exec);

/// For each feature m: sum_ij W_ij * dK_ij / d(ln l_m), where K is the
/// covariance of `x` (passed in to avoid recomputing exponentials).
/// Coincident pairs contribute 0. Row partial sums are reduced in row order,
/// so Serial and Parallel agree bit for bit.
Eigen::VectorXd ard_length_scale_traces(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k,
                                        const Eigen::MatrixXd& w, const Eigen::VectorXd& length_scales,
                                        Execution exec);

/// Same quantity as ard_length_scale_traces, written as the plain triple
/// loop with one running sum per feature. Kept for testing.
Eigen::VectorXd ard_length_scale_traces_reference(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k,
                                                  const Eigen::MatrixXd& w, const Eigen::VectorXd& length_scales);

/// For each feature m, the matrix dK / d(ln l_m).
std::vector<Eigen::MatrixXd> ard_length_scale_derivatives(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k,
                                                          const Eigen::VectorXd& length_scales, Execution exec);

/// fit_ecm over many curves; results in input order.
std::vector<FitReport> fit_ecm_batch(std::span<const RelaxationCurve> curves, Execution exec,
                                     const EcmFitOptions& options = {});

}  // namespace rulgp::kernels
