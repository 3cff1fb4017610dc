#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psopinn/autodiff.hpp"
#include "psopinn/cole_hopf.hpp"

namespace psopinn {

/// Upper bound on coordinates a benchmark problem may use.
inline constexpr std::size_t max_coords = 4;

/// Value and pure derivatives at one point, fixed-size for per-point kernels.
struct PointJet {
  double u = 0.0;
  std::array<double, max_coords> d1{};
  std::array<double, max_coords> d2{};
};

inline PointJet to_point_jet(const Jet2& jet) {
  PointJet p;
  p.u = jet.value;
  for (std::size_t i = 0; i < jet.d1.size() && i < max_coords; ++i) {
    p.d1[i] = jet.d1[i];
    p.d2[i] = jet.d2[i];
  }
  return p;
}

/// Residual N[u] - g at a point plus its partials with respect to the jet
/// entries, which is all the loss needs to back-propagate through it.
struct ResidualValue {
  double value = 0.0;
  double d_u = 0.0;
  std::array<double, max_coords> d_d1{};
  std::array<double, max_coords> d_d2{};
};

using PointFn = std::function<double(std::span<const double>)>;
using ResidualFn = std::function<ResidualValue(const PointJet&, std::span<const double>)>;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  [[nodiscard]] double length() const noexcept { return hi - lo; }
  [[nodiscard]] bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

enum class BoundaryKind { dirichlet, neumann, periodic_value, periodic_derivative };

inline std::string to_string(BoundaryKind k) {
  switch (k) {
  case BoundaryKind::dirichlet:
    return "dirichlet";
  case BoundaryKind::neumann:
    return "neumann";
  case BoundaryKind::periodic_value:
    return "periodic_value";
  case BoundaryKind::periodic_derivative:
    return "periodic_derivative";
  }
  return "?";
}

/// A boundary or initial condition.
///
/// The locus is the set of points whose coordinate `coord` equals one of the
/// values in `at`. Dirichlet constrains u, Neumann constrains du/dx_{derivative_coord};
/// both compare against `target`. Periodic kinds pair the point at at[0] with
/// the point at at[1] (same remaining coordinates) and penalise
/// f(a) - pair_sign * f(b), where f is u or du/dx_{derivative_coord}.
struct BoundarySpec {
  BoundaryKind kind = BoundaryKind::dirichlet;
  std::string name;
  std::size_t coord = 0;
  std::vector<double> at;
  std::size_t derivative_coord = 0;
  double pair_sign = 1.0;
  PointFn target;

  [[nodiscard]] bool periodic() const noexcept {
    return kind == BoundaryKind::periodic_value || kind == BoundaryKind::periodic_derivative;
  }
  [[nodiscard]] bool uses_derivative() const noexcept {
    return kind == BoundaryKind::neumann || kind == BoundaryKind::periodic_derivative;
  }
};

enum class ReferenceKind { closed_form, quadrature_oracle, grid_oracle };

inline std::string to_string(ReferenceKind k) {
  switch (k) {
  case ReferenceKind::closed_form:
    return "closed_form";
  case ReferenceKind::quadrature_oracle:
    return "quadrature_oracle";
  case ReferenceKind::grid_oracle:
    return "grid_oracle";
  }
  return "?";
}

struct ReferenceSolution {
  ReferenceKind kind = ReferenceKind::closed_form;
  PointFn evaluate;
  /// Analytic value and derivatives; closed forms only.
  std::function<PointJet(std::span<const double>)> jet;

  [[nodiscard]] bool ready() const noexcept { return static_cast<bool>(evaluate); }

  double operator()(std::span<const double> point) const {
    if (!evaluate) {
      throw std::logic_error("reference solution not available (oracle not yet computed)");
    }
    return evaluate(point);
  }
};

/// Supervised samples drawn from the reference solution.
struct DataSpec {
  std::size_t count = 0;
};

struct PdeProblem {
  std::string name;
  std::map<std::string, double> parameters;
  std::vector<std::string> coord_names;
  std::vector<Interval> domain;
  std::size_t space_coord = 0;
  std::optional<std::size_t> time_coord;
  ChannelSet residual_channels;
  ResidualFn residual;
  std::optional<BoundarySpec> initial;
  std::vector<BoundarySpec> boundaries;
  std::optional<DataSpec> data;
  ReferenceSolution reference;

  [[nodiscard]] std::size_t dims() const noexcept { return domain.size(); }

  [[nodiscard]] ResidualValue residual_at(const Jet2& jet, std::span<const double> point) const {
    return residual(to_point_jet(jet), point);
  }

  /// Stable identifier of problem + parameters, used for cache file names.
  [[nodiscard]] std::string key() const {
    std::string k = name;
    for (const auto& [p, v] : parameters) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "_%s=%.12g", p.c_str(), v);
      k += buf;
    }
    return k;
  }
};

namespace detail {

inline PointFn constant(double c) {
  return [c](std::span<const double>) { return c; };
}

} // namespace detail

/// u_xx = -(2 pi)^2 sin(2 pi x) on [0, 1], u(0) = u(1) = 0.
inline PdeProblem poisson() {
  PdeProblem p;
  p.name = "poisson";
  p.coord_names = {"x"};
  p.domain = {{0.0, 1.0}};
  p.residual_channels = ChannelSet({}, {0});
  p.residual = [](const PointJet& j, std::span<const double> x) {
    const double g = -4.0 * pi * pi * std::sin(2.0 * pi * x[0]);
    ResidualValue r;
    r.value = j.d2[0] - g;
    r.d_d2[0] = 1.0;
    return r;
  };
  p.boundaries.push_back({BoundaryKind::dirichlet, "u(0)=u(1)=0", 0, {0.0, 1.0}, 0, 1.0, detail::constant(0.0)});
  p.reference.kind = ReferenceKind::closed_form;
  p.reference.evaluate = [](std::span<const double> x) { return std::sin(2.0 * pi * x[0]); };
  p.reference.jet = [](std::span<const double> x) {
    PointJet j;
    j.u = std::sin(2.0 * pi * x[0]);
    j.d1[0] = 2.0 * pi * std::cos(2.0 * pi * x[0]);
    j.d2[0] = -4.0 * pi * pi * std::sin(2.0 * pi * x[0]);
    return j;
  };
  return p;
}

struct AdvectionParams {
  double speed = 0.5;
  double q_left = 2.0;
  double q_right = 1.0;
  double front = 0.25;
  double length = 1.0;
  double t_end = 1.0;
};

/// q_t + c q_x = 0 with a Riemann initial state; valid while the front is inside.
inline PdeProblem advection(const AdvectionParams& a = {}) {
  if (!(a.front > 0.0 && a.front < a.length)) {
    throw std::invalid_argument("advection: require 0 < x0 < L");
  }
  if (!(a.speed > 0.0)) {
    throw std::invalid_argument("advection: speed must be positive");
  }
  const double window = (a.length - a.front) / a.speed;
  if (!(a.t_end < window)) {
    throw std::invalid_argument("advection: time horizon " + std::to_string(a.t_end) +
                                " exceeds validity window " + std::to_string(window));
  }
  PdeProblem p;
  p.name = "advection";
  p.parameters = {{"u", a.speed}, {"q_l", a.q_left}, {"q_r", a.q_right}, {"x0", a.front}, {"L", a.length}};
  p.coord_names = {"x", "t"};
  p.domain = {{0.0, a.length}, {0.0, a.t_end}};
  p.time_coord = 1;
  p.residual_channels = ChannelSet({0, 1}, {});
  const double c = a.speed;
  p.residual = [c](const PointJet& j, std::span<const double>) {
    ResidualValue r;
    r.value = j.d1[1] + c * j.d1[0];
    r.d_d1[0] = c;
    r.d_d1[1] = 1.0;
    return r;
  };
  auto exact = [a, window](std::span<const double> pt) {
    const double x = pt[0];
    const double t = pt[1];
    if (t < 0.0 || t >= window) {
      throw std::domain_error("advection reference: t = " + std::to_string(t) +
                              " outside validity window [0, " + std::to_string(window) + ")");
    }
    const double pos = a.front + a.speed * t;
    if (x < pos) {
      return a.q_left;
    }
    if (x > pos) {
      return a.q_right;
    }
    return 0.5 * (a.q_left + a.q_right);
  };
  p.initial = BoundarySpec{BoundaryKind::dirichlet, "q(x,0)", 1, {0.0}, 0, 1.0, exact};
  p.boundaries.push_back({BoundaryKind::dirichlet, "q(0,t)=q_l, q(L,t)=q_r", 0, {0.0, a.length}, 0, 1.0, exact});
  p.reference.kind = ReferenceKind::closed_form;
  p.reference.evaluate = exact;
  p.reference.jet = [exact](std::span<const double> pt) {
    PointJet j;
    j.u = exact(pt);
    return j;
  };
  return p;
}

/// u_t = alpha u_xx on [0, L] x [0, 1], u = 0 at both ends, u(x,0) = sin(pi x / L).
inline PdeProblem heat(double alpha = 1.0 / (pi * pi), double length = 1.0) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("heat: diffusivity must be positive");
  }
  PdeProblem p;
  p.name = "heat";
  p.parameters = {{"alpha", alpha}, {"L", length}};
  p.coord_names = {"x", "t"};
  p.domain = {{0.0, length}, {0.0, 1.0}};
  p.time_coord = 1;
  p.residual_channels = ChannelSet({1}, {0});
  p.residual = [alpha](const PointJet& j, std::span<const double>) {
    ResidualValue r;
    r.value = j.d1[1] - alpha * j.d2[0];
    r.d_d1[1] = 1.0;
    r.d_d2[0] = -alpha;
    return r;
  };
  const double k = pi / length;
  const double rate = pi * pi * alpha / (length * length);
  p.initial = BoundarySpec{BoundaryKind::dirichlet, "u(x,0)=sin(pi x/L)", 1, {0.0}, 0, 1.0,
                           [k](std::span<const double> pt) { return std::sin(k * pt[0]); }};
  p.boundaries.push_back({BoundaryKind::dirichlet, "u(0,t)=u(L,t)=0", 0, {0.0, length}, 0, 1.0, detail::constant(0.0)});
  p.reference.kind = ReferenceKind::closed_form;
  p.reference.evaluate = [k, rate](std::span<const double> pt) {
    return std::exp(-rate * pt[1]) * std::sin(k * pt[0]);
  };
  p.reference.jet = [k, rate](std::span<const double> pt) {
    const double e = std::exp(-rate * pt[1]);
    const double s = std::sin(k * pt[0]);
    PointJet j;
    j.u = e * s;
    j.d1[0] = e * k * std::cos(k * pt[0]);
    j.d2[0] = -e * k * k * s;
    j.d1[1] = -rate * e * s;
    j.d2[1] = rate * rate * e * s;
    return j;
  };
  return p;
}

/// u_t + u u_x = nu u_xx on [-1, 1] x [0, 1], u(x,0) = -sin(pi x), u(+-1,t) = 0.
inline PdeProblem burgers(double nu = 0.02 / pi) {
  if (!(nu > 0.0)) {
    throw std::invalid_argument("burgers: viscosity must be positive");
  }
  PdeProblem p;
  p.name = "burgers";
  p.parameters = {{"nu", nu}};
  p.coord_names = {"x", "t"};
  p.domain = {{-1.0, 1.0}, {0.0, 1.0}};
  p.time_coord = 1;
  p.residual_channels = ChannelSet({0, 1}, {0});
  p.residual = [nu](const PointJet& j, std::span<const double>) {
    ResidualValue r;
    r.value = j.d1[1] + j.u * j.d1[0] - nu * j.d2[0];
    r.d_u = j.d1[0];
    r.d_d1[0] = j.u;
    r.d_d1[1] = 1.0;
    r.d_d2[0] = -nu;
    return r;
  };
  p.initial = BoundarySpec{BoundaryKind::dirichlet, "u(x,0)=-sin(pi x)", 1, {0.0}, 0, 1.0,
                           [](std::span<const double> pt) { return -std::sin(pi * pt[0]); }};
  p.boundaries.push_back({BoundaryKind::dirichlet, "u(-1,t)=u(1,t)=0", 0, {-1.0, 1.0}, 0, 1.0, detail::constant(0.0)});
  p.reference.kind = ReferenceKind::quadrature_oracle;
  p.reference.evaluate = [nu](std::span<const double> pt) { return cole_hopf_reference(nu, pt[0], pt[1]); };
  return p;
}

/// u_t - u_xx = 1 + x cos t on [0, 1] x [0, 1], u_x = sin t at x = 0 and x = 1,
/// u(x,0) = 1 + cos(2 pi x).
inline PdeProblem forced_heat() {
  PdeProblem p;
  p.name = "forced-heat";
  p.coord_names = {"x", "t"};
  p.domain = {{0.0, 1.0}, {0.0, 1.0}};
  p.time_coord = 1;
  p.residual_channels = ChannelSet({1}, {0});
  p.residual = [](const PointJet& j, std::span<const double> pt) {
    ResidualValue r;
    r.value = j.d1[1] - j.d2[0] - (1.0 + pt[0] * std::cos(pt[1]));
    r.d_d1[1] = 1.0;
    r.d_d2[0] = -1.0;
    return r;
  };
  p.initial = BoundarySpec{BoundaryKind::dirichlet, "u(x,0)=1+cos(2 pi x)", 1, {0.0}, 0, 1.0,
                           [](std::span<const double> pt) { return 1.0 + std::cos(2.0 * pi * pt[0]); }};
  p.boundaries.push_back({BoundaryKind::neumann, "u_x(0,t)=u_x(1,t)=sin t", 0, {0.0, 1.0}, 0, 1.0,
                          [](std::span<const double> pt) { return std::sin(pt[1]); }});
  p.reference.kind = ReferenceKind::closed_form;
  p.reference.evaluate = [](std::span<const double> pt) {
    const double x = pt[0];
    const double t = pt[1];
    return 1.0 + t + std::exp(-4.0 * pi * pi * t) * std::cos(2.0 * pi * x) + x * std::sin(t);
  };
  p.reference.jet = [](std::span<const double> pt) {
    const double x = pt[0];
    const double t = pt[1];
    const double e = std::exp(-4.0 * pi * pi * t);
    const double c = std::cos(2.0 * pi * x);
    const double s = std::sin(2.0 * pi * x);
    PointJet j;
    j.u = 1.0 + t + e * c + x * std::sin(t);
    j.d1[0] = -2.0 * pi * e * s + std::sin(t);
    j.d2[0] = -4.0 * pi * pi * e * c;
    j.d1[1] = 1.0 - 4.0 * pi * pi * e * c + x * std::cos(t);
    j.d2[1] = 16.0 * std::pow(pi, 4) * e * c - x * std::sin(t);
    return j;
  };
  return p;
}

/// u_t - D u_xx - 5 (u - u^3) = 0 on [-1, 1] x [0, 1], u(x,0) = x^2 cos(pi x),
/// u(-1,t) = u(1,t) and u_x(-1,t) = -u_x(1,t). The reference is a grid oracle
/// that must be attached (see attach_oracle) before it can be evaluated.
inline PdeProblem allen_cahn(double diffusivity = 1e-4, std::size_t data_points = 2000) {
  if (!(diffusivity > 0.0)) {
    throw std::invalid_argument("allen_cahn: diffusivity must be positive");
  }
  PdeProblem p;
  p.name = "allen-cahn";
  p.parameters = {{"D", diffusivity}};
  p.coord_names = {"x", "t"};
  p.domain = {{-1.0, 1.0}, {0.0, 1.0}};
  p.time_coord = 1;
  p.residual_channels = ChannelSet({1}, {0});
  p.residual = [diffusivity](const PointJet& j, std::span<const double>) {
    ResidualValue r;
    r.value = j.d1[1] - diffusivity * j.d2[0] - 5.0 * (j.u - j.u * j.u * j.u);
    r.d_u = -5.0 * (1.0 - 3.0 * j.u * j.u);
    r.d_d1[1] = 1.0;
    r.d_d2[0] = -diffusivity;
    return r;
  };
  p.initial = BoundarySpec{BoundaryKind::dirichlet, "u(x,0)=x^2 cos(pi x)", 1, {0.0}, 0, 1.0,
                           [](std::span<const double> pt) { return pt[0] * pt[0] * std::cos(pi * pt[0]); }};
  p.boundaries.push_back({BoundaryKind::periodic_value, "u(-1,t)=u(1,t)", 0, {-1.0, 1.0}, 0, 1.0, {}});
  p.boundaries.push_back({BoundaryKind::periodic_derivative, "u_x(-1,t)=-u_x(1,t)", 0, {-1.0, 1.0}, 0, -1.0, {}});
  if (data_points > 0) {
    p.data = DataSpec{data_points};
  }
  p.reference.kind = ReferenceKind::grid_oracle;
  return p;
}

} // namespace psopinn
