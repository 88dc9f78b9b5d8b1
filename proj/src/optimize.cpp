#include "rulgp/optimize.hpp"

#include <cmath>
#include <vector>

namespace rulgp {

AscentResult maximize_in_box(const SmoothObjective& objective, Eigen::VectorXd start, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, int max_iterations, double tolerance) {
  constexpr std::size_t kMemory = 8;
  auto project = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd { return t.cwiseMax(lower).cwiseMin(upper); };
  // Gradient with the components that push out of the box at an active bound removed.
  auto free_part = [&](const Eigen::VectorXd& t, const Eigen::VectorXd& g) {
    Eigen::VectorXd out = g;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if ((t(i) <= lower(i) && g(i) < 0.0) || (t(i) >= upper(i) && g(i) > 0.0)) out(i) = 0.0;
    }
    return out;
  };
  auto evaluate = [&](const Eigen::VectorXd& t, double& v, Eigen::VectorXd& g) {
    return objective(t, v, g) && std::isfinite(v) && g.allFinite();
  };

  AscentResult result;
  Eigen::VectorXd theta = project(start);
  double value = 0.0;
  Eigen::VectorXd grad;
  if (!evaluate(theta, value, grad)) return result;

  std::vector<Eigen::VectorXd> s_hist, y_hist;  // curvature pairs of -objective
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Eigen::VectorXd g = free_part(theta, grad);
    const double g_inf = g.lpNorm<Eigen::Infinity>();
    if (g_inf < 1e-10) break;
    const Eigen::VectorXd mask = (g.array() != 0.0).cast<double>();

    // Two-loop recursion on -g over the free variables.
    Eigen::VectorXd q = -g;
    std::vector<double> alphas(s_hist.size(), 0.0);
    std::vector<double> rho(s_hist.size(), 0.0);
    std::vector<Eigen::VectorXd> sm(s_hist.size()), ym(s_hist.size());
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      sm[k] = s_hist[k].cwiseProduct(mask);
      ym[k] = y_hist[k].cwiseProduct(mask);
      const double sy = sm[k].dot(ym[k]);
      rho[k] = sy > 1e-16 ? 1.0 / sy : 0.0;
    }
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      if (rho[k] == 0.0) continue;
      alphas[k] = rho[k] * sm[k].dot(q);
      q -= alphas[k] * ym[k];
    }
    double gamma = 0.1 / g_inf;
    if (!s_hist.empty() && rho.back() > 0.0) gamma = 1.0 / (rho.back() * ym.back().squaredNorm());
    q *= gamma;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      if (rho[k] == 0.0) continue;
      q += sm[k] * (alphas[k] - rho[k] * ym[k].dot(q));
    }
    Eigen::VectorXd dir = (-q).cwiseProduct(mask);
    if (!(dir.dot(g) > 0.0)) {
      dir = g * (0.1 / g_inf);
      s_hist.clear();
      y_hist.clear();
    }

    double next_value = 0.0;
    Eigen::VectorXd next_grad, cand;
    bool accepted = false;
    double step = 1.0;
    for (int back = 0; back < 40; ++back) {
      cand = project(theta + step * dir);
      const double gain = grad.dot(cand - theta);
      if (!(gain > 0.0)) break;
      if (evaluate(cand, next_value, next_grad) && next_value >= value + 1e-4 * gain) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    s_hist.push_back(cand - theta);
    y_hist.push_back(grad - next_grad);
    if (s_hist.size() > kMemory) {
      s_hist.erase(s_hist.begin());
      y_hist.erase(y_hist.begin());
    }
    const double delta = next_value - value;
    theta = cand;
    value = next_value;
    grad = std::move(next_grad);
    if (std::fabs(delta) < tolerance) {
      ++it;
      break;
    }
  }
  result.theta = theta;
  result.value = value;
  result.iterations = it;
  return result;
}

}  // namespace rulgp
