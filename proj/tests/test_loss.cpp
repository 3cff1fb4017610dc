#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "psopinn/loss.hpp"

using namespace psopinn;

namespace {

Architecture linear(std::size_t in) {
  Architecture a;
  a.input_dim = in;
  return a;
}

} // namespace

TEST(Loss, HeatZeroNetwork) {
  const PdeProblem p = heat();
  const std::size_t n = 64;
  const PointSets s = make_point_sets(p, {n, 16, 100, 0}, 1);
  const NetworkParams zero = NetworkParams::zeros(linear(2));
  const LossBreakdown b = total_loss(zero, p, s);
  // sum_k sin^2(pi k / (n-1)) over k = 0..n-1 equals (n-1)/2.
  const double expected = static_cast<double>(n - 1) / (2.0 * static_cast<double>(n));
  EXPECT_NEAR(b.boundary, expected, 1e-14);
  EXPECT_NEAR(b.boundary, 0.5, 0.01);
  EXPECT_EQ(b.residual, 0.0);
  EXPECT_EQ(b.data, 0.0);
  EXPECT_DOUBLE_EQ(b.total, b.residual + b.boundary + b.data);
}

TEST(Loss, DataMisfit) {
  Matrix pts(2, 2);
  pts << 0.1, 0.2, 0.3, 0.4;
  Vector vals(2);
  vals << 1.0, -1.0;
  EXPECT_DOUBLE_EQ(data_loss(NetworkParams::zeros(linear(2)), pts, vals), 1.0);
  EXPECT_THROW(data_loss(NetworkParams::zeros(linear(2)), pts, Vector::Ones(3)), std::invalid_argument);
}

TEST(Loss, PoissonResidualOfAffineNetwork) {
  const PdeProblem p = poisson();
  Vector theta(2);
  theta << 0.7, -0.2;
  const NetworkParams net(linear(1), theta);
  Matrix pts(1, 5);
  pts << 0.1, 0.2, 0.3, 0.55, 0.9;
  double expected = 0.0;
  for (Eigen::Index k = 0; k < pts.cols(); ++k) {
    const double r = 4.0 * pi * pi * std::sin(2.0 * pi * pts(0, k));
    expected += r * r;
  }
  expected /= 5.0;
  EXPECT_NEAR(residual_loss(net, p, pts), expected, 1e-10 * expected);

  const PointSets s = make_point_sets(p, {0, 2, 5, 0}, 1);
  // u(0) = -0.2, u(1) = 0.5: one Dirichlet group, mean of squares.
  EXPECT_NEAR(boundary_loss(net, p, s), (0.04 + 0.25) / 2.0, 1e-15);
}

TEST(Loss, PeriodicPairsAndSigns) {
  const PdeProblem p = allen_cahn(1e-4, 0);
  const double w = 0.3;
  Vector theta(3);
  theta << w, 0.0, 0.0;
  const NetworkParams net(linear(2), theta);
  const PointSets s = make_point_sets(p, {9, 8, 10, 0}, 2);
  double ic = 0.0;
  for (Eigen::Index k = 0; k < s.initial.cols(); ++k) {
    const double x = s.initial(0, k);
    const double d = w * x - x * x * std::cos(pi * x);
    ic += d * d;
  }
  ic /= static_cast<double>(s.initial.cols());
  // value pair: u(-1) - u(1) = -2w; derivative pair: u_x(-1) + u_x(1) = 2w.
  EXPECT_NEAR(boundary_loss(net, p, s), ic + 4 * w * w + 4 * w * w, 1e-14);
}

TEST(Loss, NeumannTargets) {
  const PdeProblem p = forced_heat();
  Vector theta(3);
  theta << 0.5, 0.0, 1.0;
  const NetworkParams net(linear(2), theta);
  const PointSets s = make_point_sets(p, {8, 6, 10, 0}, 3);
  double bc = 0.0;
  const BoundaryGroup& g = s.boundary.at(0);
  for (Eigen::Index k = 0; k < g.points.cols(); ++k) {
    const double d = 0.5 - std::sin(g.points(1, k));
    bc += d * d;
  }
  bc /= static_cast<double>(g.points.cols());
  double ic = 0.0;
  for (Eigen::Index k = 0; k < s.initial.cols(); ++k) {
    const double x = s.initial(0, k);
    const double d = 0.5 * x + 1.0 - (1.0 + std::cos(2.0 * pi * x));
    ic += d * d;
  }
  ic /= static_cast<double>(s.initial.cols());
  EXPECT_NEAR(boundary_loss(net, p, s), ic + bc, 1e-14);
}

TEST(Loss, GradientOverwritesAndMatchesValue) {
  const PdeProblem p = burgers();
  Architecture a;
  a.input_dim = 2;
  a.hidden = {5};
  PinnLoss loss(p, make_point_sets(p, {10, 8, 30, 0}, 1), a);
  const Vector theta = initialize(a, InitScheme::glorot(), 3).theta();
  Vector grad = Vector::Constant(theta.size(), 99.0);
  const LossBreakdown with = loss.evaluate(theta, grad);
  const LossBreakdown without = loss.evaluate(theta);
  EXPECT_EQ(with.total, without.total);
  Vector again;
  loss.evaluate(theta, again);
  EXPECT_EQ(grad, again);
  PinnLoss copy = loss;
  EXPECT_EQ(copy.value(theta), without.total);
}

TEST(Loss, NonFiniteIsReported) {
  const PdeProblem p = heat();
  PinnLoss loss(p, make_point_sets(p, {4, 4, 4, 0}, 1), linear(2));
  Vector theta = Vector::Zero(3);
  theta[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(loss.evaluate(theta), NonFiniteError);
}

TEST(Loss, ShapeMismatch) {
  const PdeProblem p = heat();
  EXPECT_THROW(PinnLoss(p, make_point_sets(p, {4, 4, 4, 0}, 1), linear(1)), std::invalid_argument);
}
