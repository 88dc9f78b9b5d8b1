#include "rulgp/kernels.hpp"

#include <cmath>

#include "rulgp/errors.hpp"

namespace rulgp::kernels {

namespace {

double scaled_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j,
                       const Eigen::VectorXd& inv_l) {
  double s = 0.0;
  for (Eigen::Index m = 0; m < a.cols(); ++m) {
    const double d = (a(i, m) - b(j, m)) * inv_l[m];
    s += d * d;
  }
  return std::sqrt(s);
}

void check_dims(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& l) {
  if (a.cols() != b.cols() || a.cols() != l.size()) {
    throw usage_error("DimensionMismatch", "feature dimension " + std::to_string(a.cols()) + " vs " +
                                               std::to_string(b.cols()) + " vs " + std::to_string(l.size()) +
                                               " length scales");
  }
}

}  // namespace

Eigen::MatrixXd ard_exponential(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sigma_f,
                                const Eigen::VectorXd& length_scales, Execution exec) {
  check_dims(a, b, length_scales);
  const Eigen::VectorXd inv_l = length_scales.cwiseInverse();
  const double s2 = sigma_f * sigma_f;
  Eigen::MatrixXd k(a.rows(), b.rows());
  const Eigen::Index rows = a.rows();
#pragma omp parallel for schedule(static) if (exec == Execution::Parallel)
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = s2 * std::exp(-scaled_distance(a, i, b, j, inv_l));
  }
  return k;
}

Eigen::MatrixXd ard_exponential_symmetric(const Eigen::MatrixXd& x, double sigma_f,
                                          const Eigen::VectorXd& length_scales, Execution exec) {
  check_dims(x, x, length_scales);
  const Eigen::VectorXd inv_l = length_scales.cwiseInverse();
  const double s2 = sigma_f * sigma_f;
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
#pragma omp parallel for schedule(dynamic, 8) if (exec == Execution::Parallel)
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = s2;
    for (Eigen::Index j = i + 1; j < n; ++j) k(i, j) = s2 * std::exp(-scaled_distance(x, i, x, j, inv_l));
  }
  k.triangularView<Eigen::StrictlyLower>() = k.transpose().triangularView<Eigen::StrictlyLower>();
  return k;
}

Eigen::VectorXd ard_length_scale_traces(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k,
                                        const Eigen::MatrixXd& w, const Eigen::VectorXd& length_scales,
                                        Execution exec) {
  check_dims(x, x, length_scales);
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::VectorXd inv_l = length_scales.cwiseInverse();
  Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(d, n);
#pragma omp parallel for schedule(dynamic, 8) if (exec == Execution::Parallel)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = scaled_distance(x, i, x, j, inv_l);
      if (r == 0.0) continue;
      const double c = w(i, j) * k(i, j) / r;
      for (Eigen::Index m = 0; m < d; ++m) {
        const double dm = (x(i, m) - x(j, m)) * inv_l[m];
        partial(m, i) += c * dm * dm;
      }
    }
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) out += partial.col(i);
  return out;
}

Eigen::VectorXd ard_length_scale_traces_reference(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k,
                                                  const Eigen::MatrixXd& w, const Eigen::VectorXd& length_scales) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index m = 0; m < d; ++m) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        double r2 = 0.0;
        for (Eigen::Index q = 0; q < d; ++q) {
          const double dq = (x(i, q) - x(j, q)) / length_scales[q];
          r2 += dq * dq;
        }
        if (r2 == 0.0) continue;
        const double dm = (x(i, m) - x(j, m)) / length_scales[m];
        out[m] += w(i, j) * k(i, j) * dm * dm / std::sqrt(r2);
      }
    }
  }
  return out;
}

std::vector<Eigen::MatrixXd> ard_length_scale_derivatives(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k,
                                                          const Eigen::VectorXd& length_scales, Execution exec) {
  check_dims(x, x, length_scales);
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::VectorXd inv_l = length_scales.cwiseInverse();
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(n, n));
#pragma omp parallel for schedule(dynamic, 8) if (exec == Execution::Parallel)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = scaled_distance(x, i, x, j, inv_l);
      if (r == 0.0) continue;
      for (Eigen::Index m = 0; m < d; ++m) {
        const double dm = (x(i, m) - x(j, m)) * inv_l[m];
        const double v = k(i, j) * dm * dm / r;
        out[static_cast<std::size_t>(m)](i, j) = v;
        out[static_cast<std::size_t>(m)](j, i) = v;
      }
    }
  }
  return out;
}

std::vector<FitReport> fit_ecm_batch(std::span<const RelaxationCurve> curves, Execution exec,
                                     const EcmFitOptions& options) {
  std::vector<FitReport> out(curves.size());
  for_each_index(curves.size(), exec, [&](std::size_t k) { out[k] = fit_ecm(curves[k], options); });
  return out;
}

}  // namespace rulgp::kernels
