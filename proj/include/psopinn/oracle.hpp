#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <locale>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psopinn/pde.hpp"

namespace psopinn {

/// Space-time solution on a uniform grid with bilinear interpolation.
///
/// `values` is slice-major: values[k * nx + j] is u(x_j, t_k) where
/// x_j = x.lo + j * (x.hi - x.lo) / (nx - 1) and likewise for t. Periodic
/// problems store the wrap node (x.hi) explicitly so interpolation is uniform.
struct GridOracle {
  std::string problem_key;
  Interval x;
  Interval t;
  std::size_t nx = 0;
  std::size_t nt = 0;
  bool periodic = false;
  double refinement_estimate = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> values;

  [[nodiscard]] double node(std::size_t slice, std::size_t j) const { return values[slice * nx + j]; }

  [[nodiscard]] double operator()(double xq, double tq) const {
    constexpr double slack = 1e-12;
    if (xq < x.lo - slack || xq > x.hi + slack || tq < t.lo - slack || tq > t.hi + slack) {
      throw std::out_of_range("GridOracle: point (" + std::to_string(xq) + ", " + std::to_string(tq) +
                              ") outside grid");
    }
    const double fx = std::clamp((xq - x.lo) / x.length() * static_cast<double>(nx - 1), 0.0,
                                 static_cast<double>(nx - 1));
    const double ft = std::clamp((tq - t.lo) / t.length() * static_cast<double>(nt - 1), 0.0,
                                 static_cast<double>(nt - 1));
    const auto j = std::min(static_cast<std::size_t>(fx), nx - 2);
    const auto k = std::min(static_cast<std::size_t>(ft), nt - 2);
    const double wx = fx - static_cast<double>(j);
    const double wt = ft - static_cast<double>(k);
    const double lower = (1.0 - wx) * node(k, j) + wx * node(k, j + 1);
    const double upper = (1.0 - wx) * node(k + 1, j) + wx * node(k + 1, j + 1);
    return (1.0 - wt) * lower + wt * upper;
  }
};

struct FdOptions {
  /// Upper bound on stored time slices; the step count is rounded up to a
  /// multiple of the storage stride.
  std::size_t max_slices = 1001;
  /// Also solve at 2*nx (and a matching step count) and report the max
  /// difference on the coarse nodes as the refinement estimate.
  bool estimate_refinement = true;
};

namespace detail {

struct MolSystem {
  const PdeProblem* problem = nullptr;
  std::size_t sx = 0;
  std::size_t st = 1;
  std::vector<double> xs;
  double dx = 0.0;
  bool periodic = false;
  bool hyperbolic = false;
  const BoundarySpec* dirichlet = nullptr;
  const BoundarySpec* neumann = nullptr;

  [[nodiscard]] std::size_t size() const noexcept { return xs.size(); }

  [[nodiscard]] ResidualValue residual(double u, double ux, double uxx, double x, double t) const {
    PointJet j;
    j.u = u;
    j.d1[sx] = ux;
    j.d2[sx] = uxx;
    std::array<double, max_coords> pt{};
    pt[sx] = x;
    pt[st] = t;
    return problem->residual(j, std::span<const double>(pt.data(), problem->dims()));
  }

  [[nodiscard]] double boundary_target(const BoundarySpec& spec, double xb, double t) const {
    std::array<double, max_coords> pt{};
    pt[sx] = xb;
    pt[st] = t;
    return spec.target(std::span<const double>(pt.data(), problem->dims()));
  }

  // Extended neighbour access with the boundary closure applied.
  [[nodiscard]] double at(const std::vector<double>& u, std::ptrdiff_t j, double t) const {
    const auto n = static_cast<std::ptrdiff_t>(u.size());
    if (j >= 0 && j < n) {
      return u[static_cast<std::size_t>(j)];
    }
    if (periodic) {
      return u[static_cast<std::size_t>(((j % n) + n) % n)];
    }
    if (neumann != nullptr) {
      // Ghost node from the central-difference Neumann closure.
      if (j < 0) {
        const double g = boundary_target(*neumann, xs.front(), t);
        return at(u, -j, t) - 2.0 * static_cast<double>(-j) * dx * g;
      }
      const double g = boundary_target(*neumann, xs.back(), t);
      const std::ptrdiff_t mirror = 2 * (n - 1) - j;
      return at(u, mirror, t) + 2.0 * static_cast<double>(j - (n - 1)) * dx * g;
    }
    return j < 0 ? u.front() : u.back();
  }

  static double minmod(double a, double b) {
    if (a > 0.0 && b > 0.0) {
      return std::min(a, b);
    }
    if (a < 0.0 && b < 0.0) {
      return std::max(a, b);
    }
    return 0.0;
  }

  // Superbee limiter; it keeps advected contact discontinuities a few cells wide.
  static double limited_slope(double left, double right) {
    const double s1 = minmod(2.0 * left, right);
    const double s2 = minmod(left, 2.0 * right);
    return std::abs(s1) > std::abs(s2) ? s1 : s2;
  }

  [[nodiscard]] double slope(const std::vector<double>& u, std::ptrdiff_t j, double t) const {
    const double um = at(u, j - 1, t);
    const double u0 = at(u, j, t);
    const double up = at(u, j + 1, t);
    return limited_slope(u0 - um, up - u0);
  }

  void apply_dirichlet(std::vector<double>& u, double t) const {
    if (dirichlet != nullptr && !periodic) {
      u.front() = boundary_target(*dirichlet, xs.front(), t);
      u.back() = boundary_target(*dirichlet, xs.back(), t);
    }
  }

  void rhs(const std::vector<double>& u, double t, std::vector<double>& out) const {
    const auto n = static_cast<std::ptrdiff_t>(u.size());
    out.assign(u.size(), 0.0);
    const double inv_dx = 1.0 / dx;
    const double inv_dx2 = inv_dx * inv_dx;
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      if (dirichlet != nullptr && !periodic && (j == 0 || j == n - 1)) {
        continue;
      }
      const double um = at(u, j - 1, t);
      const double u0 = u[static_cast<std::size_t>(j)];
      const double up = at(u, j + 1, t);
      double ux = 0.5 * (up - um) * inv_dx;
      const double uxx = (up - 2.0 * u0 + um) * inv_dx2;
      const double x = xs[static_cast<std::size_t>(j)];
      if (hyperbolic) {
        const double speed = residual(u0, ux, uxx, x, t).d_d1[sx];
        if (speed >= 0.0) {
          const double face_r = u0 + 0.5 * slope(u, j, t);
          const double face_l = um + 0.5 * slope(u, j - 1, t);
          ux = (face_r - face_l) * inv_dx;
        } else {
          const double face_r = up - 0.5 * slope(u, j + 1, t);
          const double face_l = u0 - 0.5 * slope(u, j, t);
          ux = (face_r - face_l) * inv_dx;
        }
      }
      out[static_cast<std::size_t>(j)] = -residual(u0, ux, uxx, x, t).value;
    }
  }
};

inline MolSystem make_mol(const PdeProblem& problem, std::size_t nx) {
  if (problem.dims() != 2 || !problem.time_coord || !problem.initial) {
    throw std::invalid_argument("fd_oracle: problem '" + problem.name +
                                "' is not 1D space + time with an initial condition");
  }
  MolSystem m;
  m.problem = &problem;
  m.st = *problem.time_coord;
  m.sx = problem.space_coord;
  const Interval xr = problem.domain[m.sx];
  for (const BoundarySpec& b : problem.boundaries) {
    if (b.coord != m.sx) {
      continue;
    }
    if (b.kind == BoundaryKind::periodic_value) {
      m.periodic = true;
    } else if (b.kind == BoundaryKind::dirichlet) {
      m.dirichlet = &b;
    } else if (b.kind == BoundaryKind::neumann) {
      m.neumann = &b;
    }
  }
  if (!m.periodic && m.dirichlet == nullptr && m.neumann == nullptr) {
    throw std::invalid_argument("fd_oracle: unsupported boundary conditions for '" + problem.name + "'");
  }
  if (nx < 5) {
    throw std::invalid_argument("fd_oracle: need at least 5 grid nodes");
  }
  const std::size_t nodes = m.periodic ? nx - 1 : nx;
  m.dx = xr.length() / static_cast<double>(nx - 1);
  m.xs.resize(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    m.xs[j] = xr.lo + static_cast<double>(j) * m.dx;
  }
  // The MOL form u_t = -r(u_t = 0) needs a unit u_t coefficient.
  PointJet probe;
  probe.d1[m.st] = 1.0;
  std::array<double, max_coords> pt{};
  const auto r = problem.residual(probe, std::span<const double>(pt.data(), problem.dims()));
  if (r.d_d1[m.st] != 1.0) {
    throw std::invalid_argument("fd_oracle: residual of '" + problem.name + "' is not of the form u_t - F");
  }
  m.hyperbolic = r.d_d2[m.sx] == 0.0;
  return m;
}

inline std::vector<double> initial_state(const MolSystem& m) {
  std::vector<double> u(m.size());
  const double t0 = m.problem->domain[m.st].lo;
  for (std::size_t j = 0; j < u.size(); ++j) {
    u[j] = m.boundary_target(*m.problem->initial, m.xs[j], t0);
  }
  m.apply_dirichlet(u, t0);
  return u;
}

// Largest stable RK4 step from the linearised spectral radius at t0. The
// advection part is counted twice so limited upwinding runs at Courant 0.5.
inline double stable_dt(const MolSystem& m, const std::vector<double>& u, double t) {
  double rho = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    const auto r = m.residual(u[j], 0.0, 0.0, m.xs[j], t);
    rho = std::max(rho, 4.0 * std::abs(r.d_d2[m.sx]) / (m.dx * m.dx) + 4.0 * std::abs(r.d_d1[m.sx]) / m.dx +
                            std::abs(r.d_u));
  }
  return rho > 0.0 ? 2.0 / rho : std::numeric_limits<double>::infinity();
}

inline GridOracle solve_mol(const PdeProblem& problem, std::size_t nx, std::size_t nt, std::size_t max_slices) {
  const MolSystem m = make_mol(problem, nx);
  const Interval tr = problem.domain[m.st];
  if (nt == 0) {
    throw std::invalid_argument("fd_oracle: need at least one time step");
  }
  const std::size_t stride = std::max<std::size_t>(1, (nt + max_slices - 2) / std::max<std::size_t>(max_slices - 1, 1));
  const std::size_t steps = stride * ((nt + stride - 1) / stride);
  const double dt = tr.length() / static_cast<double>(steps);

  GridOracle g;
  g.problem_key = problem.key();
  g.x = problem.domain[m.sx];
  g.t = tr;
  g.nx = nx;
  g.nt = steps / stride + 1;
  g.periodic = m.periodic;
  g.values.reserve(g.nx * g.nt);

  std::vector<double> u = initial_state(m);
  const double dt_limit = stable_dt(m, u, tr.lo);
  double bound = 0.0;
  for (const double v : u) {
    bound = std::max(bound, std::abs(v));
  }
  bound = 1e3 * (1.0 + bound);

  auto store = [&] {
    g.values.insert(g.values.end(), u.begin(), u.end());
    if (m.periodic) {
      g.values.push_back(u.front());
    }
  };
  store();

  std::vector<double> k1, k2, k3, k4, stage(u.size());
  for (std::size_t step = 0; step < steps; ++step) {
    const double t = tr.lo + static_cast<double>(step) * dt;
    m.rhs(u, t, k1);
    for (std::size_t j = 0; j < u.size(); ++j) {
      stage[j] = u[j] + 0.5 * dt * k1[j];
    }
    m.apply_dirichlet(stage, t + 0.5 * dt);
    m.rhs(stage, t + 0.5 * dt, k2);
    for (std::size_t j = 0; j < u.size(); ++j) {
      stage[j] = u[j] + 0.5 * dt * k2[j];
    }
    m.apply_dirichlet(stage, t + 0.5 * dt);
    m.rhs(stage, t + 0.5 * dt, k3);
    for (std::size_t j = 0; j < u.size(); ++j) {
      stage[j] = u[j] + dt * k3[j];
    }
    m.apply_dirichlet(stage, t + dt);
    m.rhs(stage, t + dt, k4);
    double peak = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
      u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      peak = std::max(peak, std::abs(u[j]));
    }
    const double t_next = (step + 1 == steps) ? tr.hi : t + dt;
    m.apply_dirichlet(u, t_next);
    if (!std::isfinite(peak) || peak > bound) {
      std::ostringstream msg;
      msg << "fd_oracle: unstable time stepping for '" << problem.name << "' at step " << step + 1
          << ": dt = " << dt << " exceeds the stable step " << dt_limit << " (use nt >= "
          << static_cast<std::size_t>(std::ceil(tr.length() / dt_limit)) << ")";
      throw std::runtime_error(msg.str());
    }
    if ((step + 1) % stride == 0) {
      store();
    }
  }
  return g;
}

} // namespace detail

/// Smallest step count that keeps explicit RK4 inside its stability region
/// for an nx-node grid, estimated from the initial condition, and never
/// fewer than `min_steps`.
inline std::size_t stable_step_count(const PdeProblem& problem, std::size_t nx, std::size_t min_steps = 1000) {
  const detail::MolSystem m = detail::make_mol(problem, nx);
  const Interval tr = problem.domain[m.st];
  const double dt = detail::stable_dt(m, detail::initial_state(m), tr.lo);
  return std::max(min_steps, static_cast<std::size_t>(std::ceil(tr.length() / dt)));
}

/// Method-of-lines reference: second-order central differences in space
/// (limited upwind-biased first derivatives for purely hyperbolic problems),
/// classical RK4 in time with nt steps.
inline GridOracle fd_oracle(const PdeProblem& problem, std::size_t nx, std::size_t nt, const FdOptions& opts = {}) {
  GridOracle coarse = detail::solve_mol(problem, nx, nt, opts.max_slices);
  if (opts.estimate_refinement) {
    const std::size_t fine_nx = 2 * nx - 1;
    const std::size_t fine_nt = std::max(2 * nt, stable_step_count(problem, fine_nx));
    const GridOracle fine = detail::solve_mol(problem, fine_nx, fine_nt, opts.max_slices);
    double diff = 0.0;
    for (std::size_t k = 0; k < coarse.nt; ++k) {
      const double tk = coarse.t.lo + coarse.t.length() * static_cast<double>(k) / static_cast<double>(coarse.nt - 1);
      for (std::size_t j = 0; j < coarse.nx; ++j) {
        const double xj = coarse.x.lo + coarse.x.length() * static_cast<double>(j) / static_cast<double>(coarse.nx - 1);
        diff = std::max(diff, std::abs(coarse.node(k, j) - fine(xj, tk)));
      }
    }
    coarse.refinement_estimate = diff;
  }
  return coarse;
}

inline ReferenceSolution as_reference(std::shared_ptr<const GridOracle> grid, std::size_t space_coord = 0,
                                      std::size_t time_coord = 1) {
  ReferenceSolution ref;
  ref.kind = ReferenceKind::grid_oracle;
  ref.evaluate = [grid = std::move(grid), space_coord, time_coord](std::span<const double> pt) {
    return (*grid)(pt[space_coord], pt[time_coord]);
  };
  return ref;
}

inline void attach_oracle(PdeProblem& problem, std::shared_ptr<const GridOracle> grid) {
  if (grid->problem_key != problem.key()) {
    throw std::invalid_argument("attach_oracle: grid was computed for '" + grid->problem_key + "', not '" +
                                problem.key() + "'");
  }
  problem.reference = as_reference(std::move(grid), problem.space_coord, problem.time_coord.value_or(1));
}

/// Grid cache file: an ASCII header terminated by a line "data", followed by
/// nx * nt little-endian IEEE-754 doubles in slice-major order.
///
///   psopinn-grid 1
///   problem <key>
///   nx <count>
///   nt <count>
///   x <lo> <hi>
///   t <lo> <hi>
///   periodic <0|1>
///   refinement <max abs difference, or nan>
///   data
inline void save_grid(const GridOracle& g, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_grid: cannot open " + path.string());
  }
  out.imbue(std::locale::classic());
  out.precision(17);
  out << "psopinn-grid 1\n"
      << "problem " << g.problem_key << "\n"
      << "nx " << g.nx << "\n"
      << "nt " << g.nt << "\n"
      << "x " << g.x.lo << " " << g.x.hi << "\n"
      << "t " << g.t.lo << " " << g.t.hi << "\n"
      << "periodic " << (g.periodic ? 1 : 0) << "\n"
      << "refinement " << g.refinement_estimate << "\n"
      << "data\n";
  static_assert(std::numeric_limits<double>::is_iec559);
  out.write(reinterpret_cast<const char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size() * sizeof(double)));
  if (!out) {
    throw std::runtime_error("save_grid: write failed for " + path.string());
  }
}

inline GridOracle load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_grid: cannot open " + path.string());
  }
  in.imbue(std::locale::classic());
  GridOracle g;
  std::string line;
  std::getline(in, line);
  if (line != "psopinn-grid 1") {
    throw std::runtime_error("load_grid: " + path.string() + " is not a grid cache file");
  }
  while (std::getline(in, line) && line != "data") {
    std::istringstream fields(line);
    fields.imbue(std::locale::classic());
    std::string name;
    fields >> name;
    if (name == "problem") {
      fields >> g.problem_key;
    } else if (name == "nx") {
      fields >> g.nx;
    } else if (name == "nt") {
      fields >> g.nt;
    } else if (name == "x") {
      fields >> g.x.lo >> g.x.hi;
    } else if (name == "t") {
      fields >> g.t.lo >> g.t.hi;
    } else if (name == "periodic") {
      int p = 0;
      fields >> p;
      g.periodic = p != 0;
    } else if (name == "refinement") {
      std::string v;
      fields >> v;
      g.refinement_estimate = v == "nan" || v == "-nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(v);
    }
  }
  if (line != "data" || g.nx < 2 || g.nt < 2) {
    throw std::runtime_error("load_grid: malformed header in " + path.string());
  }
  g.values.resize(g.nx * g.nt);
  in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(g.values.size() * sizeof(double))) {
    throw std::runtime_error("load_grid: truncated data in " + path.string());
  }
  return g;
}

} // namespace psopinn
