#include <cmath>

#include <gtest/gtest.h>

#include "psopinn/network.hpp"
#include "psopinn/rng.hpp"

using namespace psopinn;

namespace {

Architecture arch_of(std::size_t in, std::vector<std::size_t> hidden) {
  Architecture a;
  a.input_dim = in;
  a.hidden = std::move(hidden);
  return a;
}

// Scalar reference forward pass written against the documented layout.
double slow_forward(const Architecture& a, const Vector& theta, const std::vector<double>& x) {
  std::vector<double> h = x;
  std::size_t off = 0;
  std::vector<std::size_t> widths{a.input_dim};
  widths.insert(widths.end(), a.hidden.begin(), a.hidden.end());
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    std::vector<double> next(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) {
        next[o] += theta[static_cast<Eigen::Index>(off + o * in + i)] * h[i];
      }
    }
    off += in * out;
    for (std::size_t o = 0; o < out; ++o) {
      next[o] += theta[static_cast<Eigen::Index>(off + o)];
      if (l + 2 < widths.size()) {
        next[o] = std::tanh(next[o]);
      }
    }
    off += out;
    h = next;
  }
  return h[0];
}

} // namespace

TEST(Philox, KnownAnswerVectors) {
  EXPECT_EQ(RandomStream::philox({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(RandomStream::philox({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(RandomStream::philox({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, StreamsAreReproducibleAndDistinct) {
  RandomStream a(42, 3);
  RandomStream b(42, 3);
  RandomStream c(42, 4);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_NE(x, c.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(Philox, BelowIsInRangeAndRoughlyUniform) {
  RandomStream r(1, 1);
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) {
    const auto k = r.below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (const int c : counts) {
    EXPECT_NEAR(c, 10000, 500);
  }
}

TEST(Network, ParamCount) {
  EXPECT_EQ(param_count(arch_of(2, {8, 8, 8, 8, 8})), 321u);
  EXPECT_EQ(param_count(arch_of(1, {})), 2u);
  EXPECT_EQ(param_count(arch_of(1, {10, 10, 10})), 251u);
  EXPECT_EQ(param_count(arch_of(3, {4})), 21u);
}

TEST(Network, RejectsZeroWidth) {
  EXPECT_THROW(param_count(arch_of(1, {3, 0})), std::invalid_argument);
  EXPECT_THROW(param_count(arch_of(0, {3})), std::invalid_argument);
}

TEST(Network, FlattenUnflattenRoundTrip) {
  const Architecture a = arch_of(2, {3, 4});
  RandomStream rng(5, 0);
  const Vector theta = initialize(a, InitScheme::uniform(1.0), rng);
  const auto layers = unflatten(a, theta);
  ASSERT_EQ(layers.size(), 3u);
  EXPECT_EQ(layers[0].weight.rows(), 3);
  EXPECT_EQ(layers[0].weight.cols(), 2);
  EXPECT_EQ(layers[0].weight(1, 0), theta[2]);
  EXPECT_EQ(layers[0].bias[0], theta[6]);
  EXPECT_EQ(flatten(layers), theta);
}

TEST(Network, InitLimitsAndZeroBias) {
  const Architecture a = arch_of(2, {8, 8});
  EXPECT_NEAR(InitScheme::glorot().limit_for(8, 8), 0.6124, 1e-4);
  EXPECT_NEAR(InitScheme::he().limit_for(8, 8), 0.8660, 1e-4);
  const NetworkParams p = initialize(a, InitScheme::glorot(), 9);
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    EXPECT_TRUE(p.bias(l).isZero());
    const double lim = InitScheme::glorot().limit_for(a.fan_in(l), a.fan_out(l));
    EXPECT_LE(p.weights(l).cwiseAbs().maxCoeff(), lim);
  }
  EXPECT_EQ(initialize(a, InitScheme::glorot(), 9).theta(), p.theta());
  EXPECT_NE(initialize(a, InitScheme::glorot(), 10).theta(), p.theta());
}

TEST(Network, ParseInitNames) {
  EXPECT_EQ(InitScheme::parse("xavier"), InitScheme::glorot());
  EXPECT_EQ(InitScheme::parse("he"), InitScheme::he());
  EXPECT_DOUBLE_EQ(InitScheme::parse("uniform:0.5").limit, 0.5);
  EXPECT_THROW(InitScheme::parse("orthogonal"), std::invalid_argument);
}

TEST(Network, HandComputedForward) {
  // One hidden unit: w1 = 2, b1 = 0.5, w2 = 3, b2 = 1 at x = 0.25.
  const Architecture a = arch_of(1, {1});
  Vector theta(4);
  theta << 2.0, 0.5, 3.0, 1.0;
  EXPECT_NEAR(forward(a, theta, Vector::Constant(1, 0.25))[0], 1.0 + 3.0 * std::tanh(1.0), 1e-15);
  EXPECT_NEAR(forward(a, theta, Vector::Constant(1, 0.25))[0], 3.2848, 1e-4);
}

TEST(Network, ForwardMatchesScalarReference) {
  const Architecture a = arch_of(2, {5, 3, 4});
  RandomStream rng(3, 0);
  for (int k = 0; k < 20; ++k) {
    Vector theta = initialize(a, InitScheme::uniform(1.0), rng);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      theta[i] += 0.1 * rng.uniform(-1.0, 1.0);
    }
    const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vector xv(2);
    xv << x[0], x[1];
    EXPECT_NEAR(forward(a, theta, xv)[0], slow_forward(a, theta, x), 1e-13);
  }
}

TEST(Network, ShapeErrors) {
  const Architecture a = arch_of(2, {3});
  EXPECT_THROW(NetworkParams(a, Vector::Zero(4)), std::invalid_argument);
  EXPECT_THROW(forward(a, Vector::Zero(static_cast<Eigen::Index>(param_count(a))), Vector::Zero(3)),
               std::invalid_argument);
}
