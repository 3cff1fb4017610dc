#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "psopinn/sampling.hpp"

using namespace psopinn;

TEST(Sampling, EvenlySpacedEndpoints) {
  const auto xs = evenly_spaced({-1.0, 1.0}, 5);
  ASSERT_EQ(xs.size(), 5u);
  EXPECT_EQ(xs.front(), -1.0);
  EXPECT_EQ(xs.back(), 1.0);
  EXPECT_DOUBLE_EQ(xs[2], 0.0);
  EXPECT_THROW(evenly_spaced({0.0, 1.0}, 1), std::invalid_argument);
}

TEST(Sampling, LatinHypercubeStratification) {
  const std::vector<Interval> box{{0.0, 2.0}, {-1.0, 1.0}, {5.0, 6.0}};
  for (const std::size_t n : {1u, 7u, 100u, 1000u}) {
    const Matrix pts = latin_hypercube(box, n, 3);
    ASSERT_EQ(pts.cols(), static_cast<Eigen::Index>(n));
    for (std::size_t d = 0; d < box.size(); ++d) {
      std::set<std::size_t> strata;
      for (Eigen::Index k = 0; k < pts.cols(); ++k) {
        const double v = pts(static_cast<Eigen::Index>(d), k);
        ASSERT_GE(v, box[d].lo);
        ASSERT_LE(v, box[d].hi);
        const auto s = std::min<std::size_t>(
            n - 1, static_cast<std::size_t>((v - box[d].lo) / box[d].length() * static_cast<double>(n)));
        strata.insert(s);
      }
      EXPECT_EQ(strata.size(), n) << "dimension " << d;
    }
  }
}

TEST(Sampling, LatinHypercubeDeterministicPerSeed) {
  const std::vector<Interval> box{{0.0, 1.0}, {0.0, 1.0}};
  EXPECT_EQ(latin_hypercube(box, 50, 9), latin_hypercube(box, 50, 9));
  EXPECT_NE(latin_hypercube(box, 50, 9), latin_hypercube(box, 50, 10));
  EXPECT_THROW(latin_hypercube(box, 0, 9), std::invalid_argument);
}

TEST(Sampling, HeatPointSets) {
  const PdeProblem p = heat();
  const PointSets s = make_point_sets(p, {16, 8, 40, 0}, 1);
  EXPECT_EQ(s.residual.cols(), 40);
  EXPECT_EQ(s.initial.cols(), 16);
  for (Eigen::Index k = 0; k < s.residual.cols(); ++k) {
    EXPECT_GT(s.residual(0, k), 0.0);
    EXPECT_LT(s.residual(0, k), 1.0);
    EXPECT_GT(s.residual(1, k), 0.0);
    EXPECT_LT(s.residual(1, k), 1.0);
  }
  for (Eigen::Index k = 0; k < s.initial.cols(); ++k) {
    EXPECT_EQ(s.initial(1, k), 0.0);
    EXPECT_NEAR(s.initial_targets[k], std::sin(pi * s.initial(0, k)), 1e-15);
  }
  ASSERT_EQ(s.boundary.size(), 1u);
  EXPECT_EQ(s.boundary_point_count(), 8u);
  const BoundaryGroup& g = s.boundary[0];
  for (Eigen::Index k = 0; k < g.points.cols(); ++k) {
    EXPECT_TRUE(g.points(0, k) == 0.0 || g.points(0, k) == 1.0);
    EXPECT_NEAR(g.targets[k], 0.0, 1e-15);
  }
  EXPECT_EQ(s.data.cols(), 0);
}

TEST(Sampling, PeriodicPartnersShareTime) {
  const PdeProblem p = allen_cahn(1e-4, 0);
  const PointSets s = make_point_sets(p, {8, 10, 20, 0}, 1);
  ASSERT_EQ(s.boundary.size(), 2u);
  for (const BoundaryGroup& g : s.boundary) {
    ASSERT_EQ(g.points.cols(), 5);
    ASSERT_EQ(g.partner.cols(), 5);
    for (Eigen::Index k = 0; k < 5; ++k) {
      EXPECT_EQ(g.points(0, k), -1.0);
      EXPECT_EQ(g.partner(0, k), 1.0);
      EXPECT_EQ(g.points(1, k), g.partner(1, k));
    }
  }
}

TEST(Sampling, UnevenBoundarySplitRejected) {
  EXPECT_THROW(make_point_sets(heat(), {16, 7, 40, 0}, 1), std::invalid_argument);
}

TEST(Sampling, DataLabelledWithReference) {
  const PdeProblem p = heat();
  const PointSets s = make_point_sets(p, {16, 8, 40, 12}, 1);
  ASSERT_EQ(s.data.cols(), 12);
  for (Eigen::Index k = 0; k < s.data.cols(); ++k) {
    const std::array<double, 2> pt{s.data(0, k), s.data(1, k)};
    EXPECT_EQ(s.data_values[k], p.reference(pt));
  }
  EXPECT_NE(s.data, s.residual.leftCols(12));
}

TEST(Sampling, CsvFiles) {
  const PdeProblem p = heat();
  const PointSets s = make_point_sets(p, {4, 4, 6, 2}, 1);
  const auto dir = std::filesystem::temp_directory_path() / "psopinn_points_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_points_csv(p, s, dir);
  for (const char* name : {"points_residual.csv", "points_initial.csv", "points_boundary.csv", "points_data.csv"}) {
    std::ifstream in(dir / name);
    ASSERT_TRUE(in.good()) << name;
    std::string header;
    std::getline(in, header);
    EXPECT_NE(header.find("x,t"), std::string::npos) << name << ": " << header;
  }
  std::filesystem::remove_all(dir);
}
