#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

namespace psopinn {

inline constexpr double pi = std::numbers::pi;

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Hermite rule for weight exp(-z^2), by Golub-Welsch on the Jacobi
/// matrix (zero diagonal, off-diagonal sqrt(k/2)). Rules are cached per size.
inline const QuadratureRule& gauss_hermite(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("gauss_hermite: need at least one node");
  }
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<QuadratureRule>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd sub(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index k = 1; k < m; ++k) {
      sub[k - 1] = std::sqrt(static_cast<double>(k) / 2.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    auto rule = std::make_unique<QuadratureRule>();
    rule->nodes.resize(n);
    rule->weights.resize(n);
    for (Eigen::Index k = 0; k < m; ++k) {
      const double v0 = solver.eigenvectors()(0, k);
      rule->nodes[static_cast<std::size_t>(k)] = solver.eigenvalues()[k];
      rule->weights[static_cast<std::size_t>(k)] = std::sqrt(pi) * v0 * v0;
    }
    slot = std::move(rule);
  }
  return *slot;
}

namespace detail {

// Cole-Hopf quotient with n Gauss-Hermite nodes after substituting
// eta = sqrt(4 nu t) z. Exponents are shifted by their maximum so the
// weights e^{-cos(pi y)/(2 pi nu)} cannot overflow.
inline double cole_hopf_quotient(double nu, double x, double t, std::size_t n) {
  const QuadratureRule& rule = gauss_hermite(n);
  const double scale = std::sqrt(4.0 * nu * t);
  const double inv = 1.0 / (2.0 * pi * nu);
  double top = -INFINITY;
  for (const double z : rule.nodes) {
    top = std::max(top, -std::cos(pi * (x - scale * z)) * inv);
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double y = x - scale * rule.nodes[k];
    const double w = rule.weights[k] * std::exp(-std::cos(pi * y) * inv - top);
    num += w * std::sin(pi * y);
    den += w;
  }
  if (!(den > 0.0) || !std::isfinite(den)) {
    throw std::runtime_error("cole_hopf_reference: quadrature underflow at x=" + std::to_string(x) +
                             ", t=" + std::to_string(t));
  }
  return -num / den;
}

// Same quotient by the trapezoid rule on z in [-Z, Z] with n + 1 nodes. Z is
// wide enough that the dropped tails are below e^-40 of the peak. Used when
// the Gauss-Hermite sequence stalls, which happens near shock formation for
// small nu where the integrand is far from Gaussian in z.
inline double cole_hopf_trapezoid(double nu, double x, double t, std::size_t n) {
  const double scale = std::sqrt(4.0 * nu * t);
  const double inv = 1.0 / (2.0 * pi * nu);
  const double half = std::sqrt(40.0 + 2.0 * inv);
  const double h = 2.0 * half / static_cast<double>(n);
  auto exponent = [&](double z) { return -z * z - std::cos(pi * (x - scale * z)) * inv; };
  double top = -INFINITY;
  for (std::size_t k = 0; k <= n; ++k) {
    top = std::max(top, exponent(-half + h * static_cast<double>(k)));
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double z = -half + h * static_cast<double>(k);
    const double w = (k == 0 || k == n ? 0.5 : 1.0) * std::exp(exponent(z) - top);
    num += w * std::sin(pi * (x - scale * z));
    den += w;
  }
  return -num / den;
}

} // namespace detail

/// Exact viscous Burgers solution for u(x,0) = -sin(pi x) on [-1, 1].
/// Gauss-Hermite node count doubles from 32 until successive values differ by
/// < 1e-8; if 1024 nodes are not enough, a trapezoid rule is refined the same way.
inline double cole_hopf_reference(double nu, double x, double t) {
  if (!(nu > 0.0)) {
    throw std::invalid_argument("cole_hopf_reference: viscosity must be positive");
  }
  if (t < 0.0 || x < -1.0 || x > 1.0) {
    throw std::invalid_argument("cole_hopf_reference: require t >= 0 and x in [-1, 1]");
  }
  if (t == 0.0) {
    return -std::sin(pi * x);
  }
  constexpr std::size_t max_nodes = 1024;
  double previous = detail::cole_hopf_quotient(nu, x, t, 32);
  for (std::size_t n = 64; n <= max_nodes; n *= 2) {
    const double current = detail::cole_hopf_quotient(nu, x, t, n);
    if (std::abs(current - previous) < 1e-8) {
      return current;
    }
    previous = current;
  }
  constexpr std::size_t max_panels = std::size_t{1} << 20;
  previous = detail::cole_hopf_trapezoid(nu, x, t, 512);
  for (std::size_t n = 1024; n <= max_panels; n *= 2) {
    const double current = detail::cole_hopf_trapezoid(nu, x, t, n);
    if (std::abs(current - previous) < 1e-8) {
      return current;
    }
    previous = current;
  }
  throw std::runtime_error("cole_hopf_reference: no convergence at x=" + std::to_string(x) +
                           ", t=" + std::to_string(t));
}

} // namespace psopinn
