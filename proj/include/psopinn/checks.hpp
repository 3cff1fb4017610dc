#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "psopinn/autodiff.hpp"
#include "psopinn/loss.hpp"
#include "psopinn/optim.hpp"
#include "psopinn/oracle.hpp"
#include "psopinn/pde.hpp"
#include "psopinn/sampling.hpp"

// Self-checks shared by the `check` command, the unit tests and the acceptance
// binary. Each returns the worst measured value next to its tolerance.

namespace psopinn {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// The six benchmark problems. Allen-Cahn gets a coarse grid oracle so its
/// data term can be labelled; gradient checks do not care about its accuracy.
inline std::vector<PdeProblem> benchmark_problems(std::size_t allen_cahn_nx = 129) {
  std::vector<PdeProblem> out{poisson(), advection(), heat(), burgers(), forced_heat(), allen_cahn()};
  FdOptions opts;
  opts.estimate_refinement = false;
  opts.max_slices = 101;
  PdeProblem& ac = out.back();
  attach_oracle(ac, std::make_shared<GridOracle>(
                        fd_oracle(ac, allen_cahn_nx, stable_step_count(ac, allen_cahn_nx, 100), opts)));
  return out;
}

namespace detail {

// Hidden widths drawn so the network stays at or under max_params.
inline Architecture random_small_arch(std::size_t input_dim, RandomStream& rng, std::size_t max_params = 50) {
  for (;;) {
    Architecture arch;
    arch.input_dim = input_dim;
    const std::size_t layers = 1 + rng.below(2);
    for (std::size_t l = 0; l < layers; ++l) {
      arch.hidden.push_back(2 + rng.below(4));
    }
    if (param_count(arch) <= max_params) {
      return arch;
    }
  }
}

// Small point counts that split evenly over every problem's boundary loci.
inline PointCounts small_counts(const PdeProblem& p) {
  PointCounts c{12, 8, 20, 0};
  if (p.data) {
    c.data = 10;
  }
  return c;
}

inline double normwise_error(const Vector& a, const Vector& b) {
  const double scale = std::max(b.lpNorm<Eigen::Infinity>(), 1e-12);
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

} // namespace detail

/// Analytic loss gradient against central differences (step 1e-5) on
/// `networks` random networks of at most 50 parameters, cycling through all
/// benchmark losses. Error is max|g - g_fd| / max|g_fd| per network.
inline CheckResult check_gradients(std::size_t networks = 50, std::uint64_t seed = 7, double tolerance = 1e-6) {
  const std::vector<PdeProblem> problems = benchmark_problems();
  RandomStream rng(seed, 101);
  CheckResult r{"loss gradient vs central differences", true, 0.0, tolerance, ""};
  for (std::size_t k = 0; k < networks; ++k) {
    const PdeProblem& p = problems[k % problems.size()];
    const Architecture arch = detail::random_small_arch(p.dims(), rng);
    const PointSets sets = make_point_sets(p, detail::small_counts(p), seed + k);
    PinnLoss loss(p, sets, arch);
    RandomStream init_rng(seed + k, streams::init_base);
    const Vector theta = initialize(arch, InitScheme::glorot(), init_rng);
    const GradientRecord g = loss_gradient(theta, loss);
    const Vector fd = finite_difference_gradient(theta, loss, 1e-5);
    const double err = detail::normwise_error(g.grad_theta, fd);
    if (err > r.measured) {
      r.measured = err;
      r.detail = p.name + ", " + std::to_string(param_count(arch)) + " parameters";
    }
  }
  r.passed = r.measured < tolerance;
  return r;
}

/// eval_jet derivatives against finite differences of the network output.
/// First derivatives use the 4th-order five-point stencil (h = 1e-3), second
/// derivatives the 4th-order five-point stencil (h = 1e-2). Relative errors
/// are |a - b| / max(|b|, 1e-3).
struct JetCheck {
  CheckResult first;
  CheckResult second;
};

inline JetCheck check_jets(std::size_t samples = 100, std::uint64_t seed = 11, double tol_first = 1e-5,
                           double tol_second = 1e-4) {
  RandomStream rng(seed, 202);
  JetCheck out{{"eval_jet first derivatives vs finite differences", true, 0.0, tol_first, ""},
               {"eval_jet second derivatives vs finite differences", true, 0.0, tol_second, ""}};
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-3); };
  for (std::size_t k = 0; k < samples; ++k) {
    const std::size_t dim = 1 + rng.below(2);
    Architecture arch;
    arch.input_dim = dim;
    const std::size_t layers = 1 + rng.below(3);
    for (std::size_t l = 0; l < layers; ++l) {
      arch.hidden.push_back(3 + rng.below(6));
    }
    const Vector theta = initialize(arch, InitScheme::glorot(), rng);
    Vector x(static_cast<Eigen::Index>(dim));
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      x[d] = rng.uniform(-1.0, 1.0);
    }
    const Jet2 jet = eval_jet(arch, theta, x);
    for (std::size_t d = 0; d < dim; ++d) {
      auto f = [&](double shift) {
        Vector y = x;
        y[static_cast<Eigen::Index>(d)] += shift;
        return forward(arch, theta, y)[0];
      };
      const double h1 = 1e-3;
      const double d1 = (-f(2 * h1) + 8 * f(h1) - 8 * f(-h1) + f(-2 * h1)) / (12 * h1);
      const double h2 = 1e-2;
      const double d2 = (-f(2 * h2) + 16 * f(h2) - 30 * f(0.0) + 16 * f(-h2) - f(-2 * h2)) / (12 * h2 * h2);
      out.first.measured = std::max(out.first.measured, rel(jet.d1[d], d1));
      out.second.measured = std::max(out.second.measured, rel(jet.d2[d], d2));
    }
  }
  out.first.passed = out.first.measured < tol_first;
  out.second.passed = out.second.measured < tol_second;
  return out;
}

/// |residual| of every closed-form reference at random interior points.
inline CheckResult check_reference_residuals(std::size_t points = 100, std::uint64_t seed = 13,
                                             double tolerance = 1e-8) {
  CheckResult r{"closed-form references satisfy their PDE", true, 0.0, tolerance, ""};
  std::vector<std::string> names;
  for (const PdeProblem& p : {poisson(), advection(), heat(), burgers(), forced_heat(), allen_cahn()}) {
    if (p.reference.kind != ReferenceKind::closed_form || !p.reference.jet) {
      continue;
    }
    names.push_back(p.name);
    RandomStream rng(seed, 303);
    std::vector<double> pt(p.dims());
    for (std::size_t k = 0; k < points; ++k) {
      for (std::size_t d = 0; d < p.dims(); ++d) {
        const Interval& iv = p.domain[d];
        pt[d] = iv.lo + (iv.hi - iv.lo) * (0.001 + 0.998 * rng.uniform());
      }
      const double res = std::abs(p.residual(p.reference.jet(pt), pt).value);
      if (!(res <= r.measured)) {
        r.measured = res;
        r.detail = p.name;
      }
    }
  }
  r.passed = r.measured < tolerance;
  std::string list;
  for (const std::string& n : names) {
    list += (list.empty() ? "" : ", ") + n;
  }
  r.detail = "checked " + list + "; worst " + r.detail;
  return r;
}

namespace detail {

inline PinnLoss small_heat_loss(std::uint64_t seed) {
  const PdeProblem p = heat();
  Architecture arch;
  arch.input_dim = 2;
  arch.hidden = {6, 6};
  return PinnLoss(p, make_point_sets(p, {32, 16, 64, 0}, seed), arch);
}

} // namespace detail

/// PSO-BP with beta = 0 and c1 = c2 = 0 against independent ADAM runs; all
/// positions must agree bit for bit.
inline CheckResult check_adam_reduction(std::size_t population = 5, std::size_t iterations = 40,
                                        std::uint64_t seed = 17) {
  const PinnLoss loss = detail::small_heat_loss(seed);
  PsoHyperparams hp;
  hp.variant = Variant::pso_bp;
  hp.alpha = 0.01;
  hp.beta = 0.0;
  hp.c1 = 0.0;
  hp.c2 = 0.0;
  hp.iterations = iterations;
  AdamHyperparams ah{hp.alpha, hp.adam_beta1, hp.adam_beta2, hp.adam_eps, iterations};
  const TrainResult swarm = train_swarm(loss, InitScheme::glorot(), hp, population, seed);
  const TrainResult adam = train_adam_ensemble(loss, InitScheme::glorot(), ah, population, seed);
  std::size_t mismatched = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < population; ++i) {
    const Vector& a = swarm.swarm.particles[i].theta;
    const Vector& b = adam.swarm.particles[i].theta;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      if (a[k] != b[k]) {
        ++mismatched;
        worst = std::max(worst, std::abs(a[k] - b[k]));
      }
    }
  }
  return {"PSO-BP(beta=0, c1=c2=0) equals independent ADAM", mismatched == 0, worst, 0.0,
          std::to_string(mismatched) + " mismatched coordinates over " + std::to_string(population) + " networks, " +
              std::to_string(iterations) + " iterations"};
}

/// PSO with c1 = c2 = 0 from a random v0: the velocity must equal beta^t v0,
/// where beta^t v0 is formed by t successive multiplications.
inline CheckResult check_inertia_reduction(std::size_t population = 4, std::size_t iterations = 25,
                                           std::uint64_t seed = 19) {
  const PinnLoss loss = detail::small_heat_loss(seed);
  PsoHyperparams hp;
  hp.variant = Variant::pso;
  hp.beta = 0.9;
  hp.c1 = 0.0;
  hp.c2 = 0.0;
  hp.iterations = iterations;
  hp.initial_velocity = 0.01;
  std::vector<Vector> v0;
  std::vector<Vector> theta0;
  const TrainResult r = train_swarm(loss, InitScheme::glorot(), hp, population, seed, [&](const SwarmState& s) {
    if (s.iteration == 0) {
      for (const Particle& p : s.particles) {
        v0.push_back(p.velocity);
        theta0.push_back(p.theta);
      }
    }
  });
  std::size_t mismatched = 0;
  std::size_t rejected = r.events.size();
  double worst_pow = 0.0;
  for (std::size_t i = 0; i < population; ++i) {
    Vector expected = v0[i];
    for (std::size_t t = 0; t < iterations; ++t) {
      expected = hp.beta * expected;
    }
    const Vector& v = r.swarm.particles[i].velocity;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (v[k] != expected[k]) {
        ++mismatched;
      }
      const double closed = std::pow(hp.beta, static_cast<double>(iterations)) * v0[i][k];
      if (closed != 0.0) {
        worst_pow = std::max(worst_pow, std::abs(v[k] - closed) / std::abs(closed));
      }
    }
  }
  return {"PSO(c1=c2=0) velocity equals beta^t v0", mismatched == 0 && rejected == 0, worst_pow, 0.0,
          std::to_string(mismatched) + " mismatched coordinates; max relative gap to pow(beta, t) v0 " +
              std::to_string(worst_pow)};
}

/// n applications of the decay step against c0 (1 - 2/n)^n.
inline CheckResult check_decay_schedule(double tolerance = 1e-12) {
  double worst = 0.0;
  for (const std::size_t n : {10UL, 90UL, 500UL, 2000UL}) {
    for (const double c0 : {0.08, 0.5, 0.8}) {
      double a = c0;
      double b = c0;
      for (std::size_t t = 1; t <= n; ++t) {
        std::tie(a, b) = decay_coefficients(a, b, n, DecayRule::eq, t);
      }
      const double expected = c0 * std::pow(1.0 - 2.0 / static_cast<double>(n), static_cast<double>(n));
      worst = std::max(worst, std::abs(a - expected) / expected);
    }
  }
  return {"decay schedule equals c0 (1 - 2/n)^n", worst < tolerance, worst, tolerance, ""};
}

/// Everything above, in order.
inline std::vector<CheckResult> run_property_checks() {
  std::vector<CheckResult> out;
  out.push_back(check_gradients());
  const JetCheck j = check_jets();
  out.push_back(j.first);
  out.push_back(j.second);
  out.push_back(check_reference_residuals());
  out.push_back(check_adam_reduction());
  out.push_back(check_inertia_reduction());
  out.push_back(check_decay_schedule());
  return out;
}

} // namespace psopinn
