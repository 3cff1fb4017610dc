#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <locale>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "psopinn/pde.hpp"
#include "psopinn/rng.hpp"

namespace psopinn {

/// n points from lo to hi inclusive, uniform spacing; the last point is hi exactly.
inline std::vector<double> evenly_spaced(const Interval& range, std::size_t n) {
  if (n < 2) {
    throw std::invalid_argument("evenly_spaced: need n >= 2, got " + std::to_string(n));
  }
  std::vector<double> pts(n);
  const double step = range.length() / static_cast<double>(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    pts[k] = range.lo + static_cast<double>(k) * step;
  }
  pts[n - 1] = range.hi;
  return pts;
}

/// Latin hypercube sample of n points in a box, returned as dims x n.
///
/// Per dimension (in order): a Fisher-Yates permutation of the strata drawn
/// with RandomStream::below, then one uniform offset per sample. Sample k
/// lands in stratum perm[k], so each of the n equal-width strata of every
/// dimension holds exactly one point.
inline Matrix latin_hypercube(const std::vector<Interval>& box, std::size_t n, RandomStream& rng) {
  if (n == 0) {
    throw std::invalid_argument("latin_hypercube: need n >= 1");
  }
  Matrix pts(static_cast<Eigen::Index>(box.size()), static_cast<Eigen::Index>(n));
  std::vector<std::size_t> perm(n);
  for (std::size_t d = 0; d < box.size(); ++d) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.below(i + 1)]);
    }
    const Interval r = box[d];
    const double width = r.length() / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double lo = r.lo + static_cast<double>(perm[k]) * width;
      double v = lo + rng.uniform() * width;
      v = std::clamp(v, lo, perm[k] + 1 == n ? r.hi : lo + width);
      pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return pts;
}

inline Matrix latin_hypercube(const std::vector<Interval>& box, std::size_t n, std::uint64_t seed,
                              std::uint64_t stream = streams::residual_points) {
  RandomStream rng(seed, stream);
  return latin_hypercube(box, n, rng);
}

/// Points of one boundary condition. For periodic kinds `points` lie on
/// at[0] and `partner` holds the matching points on at[1].
struct BoundaryGroup {
  std::size_t spec = 0;
  Matrix points;
  Matrix partner;
  Vector targets;
};

struct PointSets {
  Matrix residual;
  Matrix initial;
  Vector initial_targets;
  std::vector<BoundaryGroup> boundary;
  Matrix data;
  Vector data_values;

  [[nodiscard]] std::size_t boundary_point_count() const {
    std::size_t n = 0;
    for (const BoundaryGroup& g : boundary) {
      n += static_cast<std::size_t>(g.points.cols() + g.partner.cols());
    }
    return n;
  }
};

struct PointCounts {
  std::size_t initial = 1024;
  std::size_t boundary = 512;
  std::size_t residual = 1000;
  std::size_t data = 0;

  friend bool operator==(const PointCounts&, const PointCounts&) = default;
};

namespace detail {

inline Vector targets_at(const PdeProblem& problem, const BoundarySpec& spec, const Matrix& pts) {
  Vector out(pts.cols());
  std::vector<double> pt(problem.dims());
  for (Eigen::Index k = 0; k < pts.cols(); ++k) {
    for (std::size_t d = 0; d < pt.size(); ++d) {
      pt[d] = pts(static_cast<Eigen::Index>(d), k);
    }
    out[k] = spec.target ? spec.target(pt) : 0.0;
  }
  return out;
}

// Points on {coord = value} spread evenly along the time axis.
inline Matrix locus_points(const PdeProblem& problem, std::size_t coord, double value, std::size_t n) {
  const auto dims = static_cast<Eigen::Index>(problem.dims());
  if (!problem.time_coord || problem.dims() == 1) {
    Matrix pts = Matrix::Zero(dims, 1);
    pts(static_cast<Eigen::Index>(coord), 0) = value;
    return pts;
  }
  const std::size_t tc = *problem.time_coord;
  const std::vector<double> ts = evenly_spaced(problem.domain[tc], n);
  Matrix pts = Matrix::Zero(dims, static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    pts(static_cast<Eigen::Index>(coord), static_cast<Eigen::Index>(k)) = value;
    pts(static_cast<Eigen::Index>(tc), static_cast<Eigen::Index>(k)) = ts[k];
  }
  return pts;
}

} // namespace detail

/// Builds every point set for one run. Residual points are a latin hypercube
/// over the domain; initial points are evenly spaced in space at t0; boundary
/// points are evenly spaced in time on each spatial locus, split equally
/// between loci; data points (if any) are a latin hypercube labelled by the
/// reference solution.
inline PointSets make_point_sets(const PdeProblem& problem, const PointCounts& counts, std::uint64_t seed) {
  PointSets sets;
  {
    RandomStream rng(seed, streams::residual_points);
    sets.residual = latin_hypercube(problem.domain, counts.residual, rng);
    // Collocation points must be interior.
    for (Eigen::Index k = 0; k < sets.residual.cols(); ++k) {
      for (std::size_t d = 0; d < problem.dims(); ++d) {
        double& v = sets.residual(static_cast<Eigen::Index>(d), k);
        const Interval r = problem.domain[d];
        if (v <= r.lo || v >= r.hi) {
          v = std::clamp(v, std::nextafter(r.lo, r.hi), std::nextafter(r.hi, r.lo));
        }
      }
    }
  }

  if (problem.initial) {
    const BoundarySpec& ic = *problem.initial;
    const std::size_t tc = ic.coord;
    std::size_t sc = problem.space_coord;
    const std::vector<double> xs = evenly_spaced(problem.domain[sc], counts.initial);
    sets.initial = Matrix::Zero(static_cast<Eigen::Index>(problem.dims()), static_cast<Eigen::Index>(xs.size()));
    for (std::size_t k = 0; k < xs.size(); ++k) {
      sets.initial(static_cast<Eigen::Index>(sc), static_cast<Eigen::Index>(k)) = xs[k];
      sets.initial(static_cast<Eigen::Index>(tc), static_cast<Eigen::Index>(k)) = ic.at.at(0);
    }
    sets.initial_targets = detail::targets_at(problem, ic, sets.initial);
  }

  if (!problem.boundaries.empty()) {
    std::vector<std::pair<std::size_t, double>> loci;
    for (const BoundarySpec& b : problem.boundaries) {
      for (const double v : b.at) {
        if (std::find(loci.begin(), loci.end(), std::pair{b.coord, v}) == loci.end()) {
          loci.emplace_back(b.coord, v);
        }
      }
    }
    std::size_t per_locus = 1;
    if (problem.time_coord && problem.dims() > 1) {
      if (counts.boundary % loci.size() != 0 || counts.boundary / loci.size() < 2) {
        throw std::invalid_argument("make_point_sets: " + std::to_string(counts.boundary) +
                                    " boundary points cannot be split evenly over " +
                                    std::to_string(loci.size()) + " boundary loci");
      }
      per_locus = counts.boundary / loci.size();
    }
    for (std::size_t s = 0; s < problem.boundaries.size(); ++s) {
      const BoundarySpec& b = problem.boundaries[s];
      BoundaryGroup group;
      group.spec = s;
      if (b.periodic()) {
        if (b.at.size() != 2) {
          throw std::invalid_argument("make_point_sets: periodic condition needs exactly two loci");
        }
        group.points = detail::locus_points(problem, b.coord, b.at[0], per_locus);
        group.partner = detail::locus_points(problem, b.coord, b.at[1], per_locus);
        group.targets = Vector::Zero(group.points.cols());
      } else {
        const auto cols = static_cast<Eigen::Index>(per_locus * b.at.size());
        group.points.resize(static_cast<Eigen::Index>(problem.dims()), cols);
        for (std::size_t i = 0; i < b.at.size(); ++i) {
          group.points.middleCols(static_cast<Eigen::Index>(i * per_locus), static_cast<Eigen::Index>(per_locus)) =
              detail::locus_points(problem, b.coord, b.at[i], per_locus);
        }
        group.targets = detail::targets_at(problem, b, group.points);
      }
      sets.boundary.push_back(std::move(group));
    }
  }

  const std::size_t n_data = counts.data > 0 ? counts.data : (problem.data ? problem.data->count : 0);
  if (n_data > 0) {
    RandomStream rng(seed, streams::data_points);
    sets.data = latin_hypercube(problem.domain, n_data, rng);
    sets.data_values.resize(sets.data.cols());
    std::vector<double> pt(problem.dims());
    for (Eigen::Index k = 0; k < sets.data.cols(); ++k) {
      for (std::size_t d = 0; d < pt.size(); ++d) {
        pt[d] = sets.data(static_cast<Eigen::Index>(d), k);
      }
      sets.data_values[k] = problem.reference(pt);
    }
  }
  return sets;
}

/// Writes points_residual.csv, points_initial.csv, points_boundary.csv and
/// (when present) points_data.csv into `dir`.
inline void write_points_csv(const PdeProblem& problem, const PointSets& sets, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto header = [&](std::ofstream& out) {
    for (std::size_t d = 0; d < problem.dims(); ++d) {
      out << (d ? "," : "") << problem.coord_names[d];
    }
  };
  auto row = [&](std::ofstream& out, const Matrix& m, Eigen::Index k) {
    for (Eigen::Index d = 0; d < m.rows(); ++d) {
      out << (d ? "," : "") << m(d, k);
    }
  };
  std::ofstream res(dir / "points_residual.csv");
  res.imbue(std::locale::classic());
  res.precision(17);
  header(res);
  res << "\n";
  for (Eigen::Index k = 0; k < sets.residual.cols(); ++k) {
    row(res, sets.residual, k);
    res << "\n";
  }
  std::ofstream ini(dir / "points_initial.csv");
  ini.imbue(std::locale::classic());
  ini.precision(17);
  header(ini);
  ini << ",target\n";
  for (Eigen::Index k = 0; k < sets.initial.cols(); ++k) {
    row(ini, sets.initial, k);
    ini << "," << sets.initial_targets[k] << "\n";
  }
  std::ofstream bnd(dir / "points_boundary.csv");
  bnd.imbue(std::locale::classic());
  bnd.precision(17);
  bnd << "spec,kind,";
  header(bnd);
  bnd << ",partner_" << problem.coord_names[0];
  for (std::size_t d = 1; d < problem.dims(); ++d) {
    bnd << ",partner_" << problem.coord_names[d];
  }
  bnd << ",target\n";
  for (const BoundaryGroup& g : sets.boundary) {
    for (Eigen::Index k = 0; k < g.points.cols(); ++k) {
      bnd << g.spec << "," << to_string(problem.boundaries[g.spec].kind) << ",";
      row(bnd, g.points, k);
      for (std::size_t d = 0; d < problem.dims(); ++d) {
        bnd << ",";
        if (g.partner.cols() > 0) {
          bnd << g.partner(static_cast<Eigen::Index>(d), k);
        }
      }
      bnd << "," << g.targets[k] << "\n";
    }
  }
  if (sets.data.cols() > 0) {
    std::ofstream dat(dir / "points_data.csv");
    dat.imbue(std::locale::classic());
    dat.precision(17);
    header(dat);
    dat << ",value\n";
    for (Eigen::Index k = 0; k < sets.data.cols(); ++k) {
      row(dat, sets.data, k);
      dat << "," << sets.data_values[k] << "\n";
    }
  }
}

} // namespace psopinn
