#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "psopinn/autodiff.hpp"
#include "psopinn/checks.hpp"

using namespace psopinn;

namespace {

Architecture arch_of(std::size_t in, std::vector<std::size_t> hidden) {
  Architecture a;
  a.input_dim = in;
  a.hidden = std::move(hidden);
  return a;
}

// sum_k w_k * (u^2 + u_x^2 + u_xx) over a fixed set of points; a toy
// objective mixing every jet channel.
struct JetObjective {
  Architecture arch;
  Matrix pts;
  Vector weights;

  double value(const Vector& theta) {
    JetTape t(arch, ChannelSet::full(arch.input_dim), pts);
    t.forward(theta);
    const Vector u = t.value().transpose();
    const Vector ux = t.d1(0).transpose();
    const Vector uxx = t.d2(arch.input_dim - 1).transpose();
    return weights.dot(u.cwiseProduct(u) + ux.cwiseProduct(ux) + uxx);
  }

  double value_and_gradient(const Vector& theta, Vector& grad) {
    JetTape t(arch, ChannelSet::full(arch.input_dim), pts);
    t.forward(theta);
    Matrix adj = Matrix::Zero(1, t.output().cols());
    const auto n = pts.cols();
    const ChannelSet& ch = t.channels();
    adj.row(0).segment(t.block(0), n) = 2.0 * weights.transpose().cwiseProduct(t.value());
    adj.row(0).segment(t.block(ch.first_channel(0)), n) += 2.0 * weights.transpose().cwiseProduct(t.d1(0));
    adj.row(0).segment(t.block(ch.second_channel(arch.input_dim - 1)), n) += weights.transpose();
    t.backward(theta, adj, grad);
    return value(theta);
  }
};

} // namespace

TEST(Jet, TanhOfInputAtOne) {
  // u(x) = tanh(x): u' = 1 - tanh^2, u'' = -2 tanh (1 - tanh^2).
  const Architecture a = arch_of(1, {1});
  Vector theta(4);
  theta << 1.0, 0.0, 1.0, 0.0;
  const Jet2 j = eval_jet(a, theta, Vector::Constant(1, 1.0));
  EXPECT_NEAR(j.value, 0.7616, 1e-4);
  EXPECT_NEAR(j.d1[0], 0.4200, 1e-4);
  EXPECT_NEAR(j.d2[0], -0.6397, 1e-4);
  const double t = std::tanh(1.0);
  EXPECT_NEAR(j.value, t, 1e-15);
  EXPECT_NEAR(j.d1[0], 1.0 - t * t, 1e-15);
  EXPECT_NEAR(j.d2[0], -2.0 * t * (1.0 - t * t), 1e-15);
}

TEST(Jet, LinearNetworkHasNoCurvature) {
  const Architecture a = arch_of(2, {});
  Vector theta(3);
  theta << 2.0, -3.0, 0.5;
  Vector x(2);
  x << 0.1, 0.2;
  const Jet2 j = eval_jet(a, theta, x);
  EXPECT_DOUBLE_EQ(j.value, 0.2 - 0.6 + 0.5);
  EXPECT_DOUBLE_EQ(j.d1[0], 2.0);
  EXPECT_DOUBLE_EQ(j.d1[1], -3.0);
  EXPECT_DOUBLE_EQ(j.d2[0], 0.0);
}

TEST(Jet, SaturatesWithoutNan) {
  const Architecture a = arch_of(1, {1});
  Vector theta(4);
  theta << 1000.0, 0.0, 1.0, 0.0;
  for (const double x : {-5.0, 5.0}) {
    const Jet2 j = eval_jet(a, theta, Vector::Constant(1, x));
    EXPECT_DOUBLE_EQ(std::abs(j.value), 1.0);
    EXPECT_TRUE(std::isfinite(j.d1[0]));
    EXPECT_TRUE(std::isfinite(j.d2[0]));
  }
}

TEST(Jet, BatchMatchesPointwise) {
  const Architecture a = arch_of(2, {6, 5});
  const Vector theta = initialize(a, InitScheme::glorot(), 4).theta();
  RandomStream rng(8, 0);
  Matrix pts(2, 17);
  for (Eigen::Index k = 0; k < pts.size(); ++k) {
    pts.data()[k] = rng.uniform(-1, 1);
  }
  JetTape tape(a, ChannelSet({0, 1}, {0}), pts);
  tape.forward(theta);
  for (Eigen::Index k = 0; k < pts.cols(); ++k) {
    const Jet2 j = eval_jet(a, theta, pts.col(k));
    EXPECT_NEAR(tape.value()(k), j.value, 1e-14);
    EXPECT_NEAR(tape.d1(0)(k), j.d1[0], 1e-14);
    EXPECT_NEAR(tape.d1(1)(k), j.d1[1], 1e-14);
    EXPECT_NEAR(tape.d2(0)(k), j.d2[0], 1e-14);
    EXPECT_NEAR(tape.value()(k), forward(a, theta, pts.col(k))[0], 1e-14);
  }
  EXPECT_THROW((void)tape.d2(1), std::out_of_range);
}

TEST(Jet, ChannelSetAddsFirstForSecond) {
  const ChannelSet c({1}, {0});
  EXPECT_TRUE(c.has_first(0));
  EXPECT_EQ(c.count(), 4u);
  EXPECT_EQ(c.second_channel(0), 3u);
}

TEST(Jet, FiniteDifferenceOracle) {
  const JetCheck j = check_jets(100, 11);
  EXPECT_TRUE(j.first.passed) << j.first.measured;
  EXPECT_TRUE(j.second.passed) << j.second.measured;
}

TEST(Gradient, ReverseAccumulationMatchesFiniteDifferences) {
  for (const std::size_t dim : {1u, 2u}) {
    JetObjective obj{arch_of(dim, {4, 3}), Matrix(dim, 9), Vector(9)};
    RandomStream rng(dim, 0);
    for (Eigen::Index k = 0; k < obj.pts.size(); ++k) {
      obj.pts.data()[k] = rng.uniform(-1, 1);
    }
    for (Eigen::Index k = 0; k < obj.weights.size(); ++k) {
      obj.weights[k] = rng.uniform(0.5, 1.5);
    }
    const Vector theta = initialize(obj.arch, InitScheme::uniform(0.8), rng);
    const GradientRecord g = loss_gradient(theta, obj);
    const Vector fd = finite_difference_gradient(theta, obj);
    EXPECT_LT((g.grad_theta - fd).lpNorm<Eigen::Infinity>() / fd.lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(Gradient, BackwardAccumulates) {
  JetObjective obj{arch_of(1, {3}), Matrix::Constant(1, 2, 0.3), Vector::Ones(2)};
  const Vector theta = initialize(obj.arch, InitScheme::glorot(), 2).theta();
  Vector once = Vector::Zero(theta.size());
  obj.value_and_gradient(theta, once);
  Vector twice = once;
  obj.value_and_gradient(theta, twice);
  EXPECT_TRUE(twice.isApprox(2.0 * once));
}

TEST(Gradient, NonFiniteIsReported) {
  struct Bad {
    double value(const Vector&) { return std::numeric_limits<double>::quiet_NaN(); }
    double value_and_gradient(const Vector&, Vector&) { return std::numeric_limits<double>::infinity(); }
  } bad;
  EXPECT_THROW(loss_gradient(Vector::Zero(3), bad), NonFiniteError);
}

TEST(Gradient, AllBenchmarkLossesMatchCentralDifferences) {
  const CheckResult r = check_gradients(50, 7);
  EXPECT_TRUE(r.passed) << r.measured << " " << r.detail;
}
