#include <cmath>
#include <filesystem>
#include <memory>

#include <gtest/gtest.h>

#include "psopinn/checks.hpp"
#include "psopinn/cole_hopf.hpp"
#include "psopinn/oracle.hpp"
#include "psopinn/pde.hpp"

using namespace psopinn;

namespace {

double ref(const PdeProblem& p, double x, double t) {
  const std::array<double, 2> pt{x, t};
  return p.reference(pt);
}

double max_grid_error(const PdeProblem& p, const GridOracle& g) {
  double err = 0.0;
  for (std::size_t k = 0; k < g.nt; ++k) {
    const double t = g.t.lo + g.t.length() * static_cast<double>(k) / static_cast<double>(g.nt - 1);
    for (std::size_t j = 0; j < g.nx; ++j) {
      const double x = g.x.lo + g.x.length() * static_cast<double>(j) / static_cast<double>(g.nx - 1);
      err = std::max(err, std::abs(g.node(k, j) - ref(p, x, t)));
    }
  }
  return err;
}

} // namespace

TEST(Reference, HeatDecay) {
  const PdeProblem p = heat();
  EXPECT_NEAR(ref(p, 0.5, 1.0), std::exp(-1.0), 1e-14);
  EXPECT_NEAR(ref(p, 0.5, 1.0), 0.3679, 1e-4);
  EXPECT_NEAR(ref(p, 0.0, 0.3), 0.0, 1e-15);
}

TEST(Reference, AdvectionRiemannFront) {
  const PdeProblem p = advection();
  EXPECT_EQ(ref(p, 0.1, 0.0), 2.0);
  EXPECT_EQ(ref(p, 0.5, 0.0), 1.0);
  EXPECT_EQ(ref(p, 0.5, 0.6), 2.0);
  EXPECT_EQ(ref(p, 0.9, 0.6), 1.0);
  EXPECT_THROW(ref(p, 0.5, 1.6), std::domain_error);
  AdvectionParams a;
  a.t_end = 2.0;
  EXPECT_THROW(advection(a), std::invalid_argument);
}

TEST(Reference, ForcedHeatInitialAndNeumann) {
  const PdeProblem p = forced_heat();
  EXPECT_NEAR(ref(p, 0.0, 0.0), 2.0, 1e-15);
  EXPECT_NEAR(ref(p, 0.5, 0.0), 0.0, 1e-15);
  const std::array<double, 2> pt{1.0, 0.7};
  EXPECT_NEAR(p.reference.jet(pt).d1[0], std::sin(0.7), 1e-12);
}

TEST(Reference, ClosedFormsSatisfyResidual) {
  const CheckResult r = check_reference_residuals(100, 13, 1e-8);
  EXPECT_TRUE(r.passed) << r.measured << " " << r.detail;
}

TEST(ColeHopf, InitialConditionAndOddSymmetry) {
  const double nu = 0.02 / pi;
  EXPECT_DOUBLE_EQ(cole_hopf_reference(nu, 0.3, 0.0), -std::sin(pi * 0.3));
  for (const double t : {0.1, 0.5, 1.0}) {
    for (const double x : {0.1, 0.4, 0.8}) {
      EXPECT_NEAR(cole_hopf_reference(nu, -x, t), -cole_hopf_reference(nu, x, t), 1e-8);
    }
    EXPECT_NEAR(cole_hopf_reference(nu, 0.0, t), 0.0, 1e-8);
  }
  EXPECT_NEAR(cole_hopf_reference(nu, 0.5, 1e-6), -1.0, 1e-4);
}

TEST(ColeHopf, ShockSlopeBenchmark) {
  // Published steepest gradient for nu = 0.01/pi: |u_x| = 152.00516 at x = 0, t = 1.6037/pi.
  const double nu = 0.01 / pi;
  const double h = 1e-5;
  const double slope =
      (cole_hopf_reference(nu, h, 1.6037 / pi) - cole_hopf_reference(nu, -h, 1.6037 / pi)) / (2.0 * h);
  EXPECT_NEAR(slope, -152.00516, 0.01);
}

TEST(ColeHopf, RejectsBadInput) {
  EXPECT_THROW(cole_hopf_reference(0.0, 0.1, 0.1), std::invalid_argument);
  EXPECT_THROW(cole_hopf_reference(0.01, 1.5, 0.1), std::invalid_argument);
}

TEST(Oracle, HeatSecondOrderConvergence) {
  const PdeProblem p = heat();
  FdOptions o;
  o.estimate_refinement = false;
  o.max_slices = 51;
  double previous = 0.0;
  for (const std::size_t nx : {33u, 65u, 129u}) {
    const double err = max_grid_error(p, fd_oracle(p, nx, stable_step_count(p, nx, 50), o));
    if (previous > 0.0) {
      EXPECT_NEAR(previous / err, 4.0, 0.5) << "nx " << nx;
    }
    previous = err;
  }
  EXPECT_LT(previous, 1e-4);
}

TEST(Oracle, BurgersAgreesWithColeHopf) {
  const PdeProblem p = burgers();
  FdOptions o;
  o.estimate_refinement = false;
  o.max_slices = 11;
  const GridOracle g = fd_oracle(p, 801, stable_step_count(p, 801), o);
  double err = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double t = 0.1 * static_cast<double>(k);
    for (std::size_t j = 0; j < g.nx; j += 8) {
      const double x = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(g.nx - 1);
      err = std::max(err, std::abs(g.node(k, j) - ref(p, x, t)));
    }
  }
  EXPECT_LT(err, 1e-3);
}

TEST(Oracle, ForcedHeatNeumannBoundaries) {
  const PdeProblem p = forced_heat();
  FdOptions o;
  o.estimate_refinement = false;
  o.max_slices = 21;
  EXPECT_LT(max_grid_error(p, fd_oracle(p, 129, stable_step_count(p, 129, 20), o)), 2e-3);
}

TEST(Oracle, AdvectionFrontAwayFromDiscontinuity) {
  const PdeProblem p = advection();
  FdOptions o;
  o.estimate_refinement = false;
  o.max_slices = 11;
  const GridOracle g = fd_oracle(p, 801, stable_step_count(p, 801, 10), o);
  const double dx = 1.0 / 800.0;
  double err = 0.0;
  for (std::size_t k = 0; k < g.nt; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(g.nt - 1);
    const double front = 0.25 + 0.5 * t;
    for (std::size_t j = 0; j < g.nx; ++j) {
      const double x = static_cast<double>(j) * dx;
      if (std::abs(x - front) > 10 * dx) {
        err = std::max(err, std::abs(g.node(k, j) - ref(p, x, t)));
      }
    }
  }
  EXPECT_LT(err, 1e-2);
}

TEST(Oracle, AllenCahnPeriodicAndCached) {
  const PdeProblem p = allen_cahn();
  FdOptions o;
  o.max_slices = 21;
  auto g = std::make_shared<GridOracle>(fd_oracle(p, 129, stable_step_count(p, 129, 200), o));
  EXPECT_TRUE(g->periodic);
  EXPECT_TRUE(std::isfinite(g->refinement_estimate));
  for (std::size_t k = 0; k < g->nt; ++k) {
    EXPECT_EQ(g->node(k, 0), g->node(k, g->nx - 1));
  }
  EXPECT_NEAR((*g)(0.5, 0.0), 0.25 * std::cos(pi * 0.5), 1e-12);

  const auto path = std::filesystem::temp_directory_path() / "psopinn_test_grid.grid";
  save_grid(*g, path);
  const GridOracle back = load_grid(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.values, g->values);
  EXPECT_EQ(back.problem_key, g->problem_key);
  EXPECT_EQ(back.nx, g->nx);

  PdeProblem q = p;
  attach_oracle(q, g);
  EXPECT_TRUE(q.reference.ready());
  PdeProblem other = allen_cahn(2e-4);
  EXPECT_THROW(attach_oracle(other, g), std::invalid_argument);
  EXPECT_THROW((void)(*g)(2.0, 0.5), std::out_of_range);
}

TEST(Oracle, UnattachedGridReferenceThrows) {
  const PdeProblem p = allen_cahn();
  EXPECT_FALSE(p.reference.ready());
  EXPECT_THROW(ref(p, 0.0, 0.5), std::logic_error);
}

TEST(Problem, KeyIncludesParameters) {
  EXPECT_NE(heat().key(), heat(0.2).key());
  EXPECT_EQ(burgers().key(), burgers().key());
}

TEST(Reference, SatisfiesBoundaryTargets) {
  for (const PdeProblem& p : {poisson(), advection(), heat(), burgers(), forced_heat()}) {
    const PointSets s = make_point_sets(p, {100, 100, 1, 0}, 1);
    double worst = 0.0;
    auto check = [&](const BoundarySpec& spec, const Matrix& pts, const Vector& targets) {
      for (Eigen::Index k = 0; k < pts.cols(); ++k) {
        std::vector<double> pt(p.dims());
        for (std::size_t d = 0; d < pt.size(); ++d) {
          pt[d] = pts(static_cast<Eigen::Index>(d), k);
        }
        const double got = spec.uses_derivative() ? p.reference.jet(pt).d1[spec.derivative_coord] : p.reference(pt);
        worst = std::max(worst, std::abs(got - targets[k]));
      }
    };
    if (p.initial) {
      check(*p.initial, s.initial, s.initial_targets);
    }
    for (const BoundaryGroup& g : s.boundary) {
      check(p.boundaries[g.spec], g.points, g.targets);
    }
    EXPECT_LT(worst, 1e-6) << p.name;
  }
}
