#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "psopinn/autodiff.hpp"
#include "psopinn/optim.hpp"
#include "psopinn/pde.hpp"
#include "psopinn/sampling.hpp"

namespace psopinn {

struct EnsemblePrediction {
  Matrix mesh;    ///< dims x n evaluation points
  Vector mean;    ///< ensemble mean per point
  Vector variance; ///< sample variance (divisor members - 1) per point
  Vector best_values; ///< output of the best individual per point
  Vector best_individual;
  std::size_t best_index = 0;
  std::size_t members = 0;
  std::vector<std::string> warnings;

  [[nodiscard]] Vector std_dev() const { return variance.cwiseSqrt(); }
};

/// Mean, sample variance and best-individual output of a set of networks on a mesh.
inline EnsemblePrediction predict(const Architecture& arch, const std::vector<Vector>& thetas, std::size_t best,
                                  const Matrix& mesh) {
  if (mesh.cols() == 0) {
    throw std::invalid_argument("predict: empty mesh");
  }
  if (thetas.empty()) {
    throw std::invalid_argument("predict: no ensemble members");
  }
  if (best >= thetas.size()) {
    throw std::out_of_range("predict: best index out of range");
  }
  const Eigen::Index n = mesh.cols();
  JetTape tape(arch, ChannelSet::value_only(), mesh);
  Matrix outputs(static_cast<Eigen::Index>(thetas.size()), n);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    tape.forward(thetas[i]);
    outputs.row(static_cast<Eigen::Index>(i)) = tape.value();
  }
  EnsemblePrediction out;
  out.mesh = mesh;
  out.members = thetas.size();
  out.mean = outputs.colwise().mean().transpose();
  if (thetas.size() > 1) {
    const Matrix centred = outputs.rowwise() - out.mean.transpose();
    out.variance = centred.colwise().squaredNorm().transpose() / static_cast<double>(thetas.size() - 1);
  } else {
    out.variance = Vector::Zero(n);
    out.warnings.emplace_back("ensemble has one member; variance reported as 0");
  }
  out.best_index = best;
  out.best_individual = thetas[best];
  out.best_values = outputs.row(static_cast<Eigen::Index>(best)).transpose();
  return out;
}

enum class Aggregate { positions, personal_bests };

/// Prediction from a trained swarm. By default aggregates current positions;
/// the best individual is the particle with the lowest current loss.
inline EnsemblePrediction predict(const SwarmState& swarm, const Architecture& arch, const Matrix& mesh,
                                  Aggregate which = Aggregate::positions) {
  std::vector<Vector> thetas;
  thetas.reserve(swarm.particles.size());
  for (const Particle& p : swarm.particles) {
    thetas.push_back(which == Aggregate::positions ? p.theta : p.p_best);
  }
  std::size_t best = swarm.best_current();
  if (which == Aggregate::personal_bests) {
    best = 0;
    for (std::size_t i = 1; i < swarm.particles.size(); ++i) {
      if (swarm.particles[i].p_best_loss < swarm.particles[best].p_best_loss) {
        best = i;
      }
    }
  }
  return predict(arch, thetas, best, mesh);
}

/// Relative discrete L2 error ||f - U|| / ||U||.
inline double l2_error(const Vector& prediction, const Vector& reference) {
  if (prediction.size() != reference.size()) {
    throw std::invalid_argument("l2_error: length mismatch");
  }
  const double denom = reference.norm();
  if (!(denom > 0.0)) {
    throw std::invalid_argument("l2_error: reference has zero norm");
  }
  return (prediction - reference).norm() / denom;
}

/// Evenly spaced evaluation mesh: nx points per spatial axis times nt time
/// slices, time-major (all x for the first t, then the next t).
inline Matrix make_test_mesh(const PdeProblem& problem, std::size_t nx = 256, std::size_t nt = 100) {
  const auto dims = static_cast<Eigen::Index>(problem.dims());
  const std::vector<double> xs = evenly_spaced(problem.domain[problem.space_coord], nx);
  if (!problem.time_coord || problem.dims() == 1) {
    Matrix mesh = Matrix::Zero(dims, static_cast<Eigen::Index>(nx));
    for (std::size_t j = 0; j < nx; ++j) {
      mesh(static_cast<Eigen::Index>(problem.space_coord), static_cast<Eigen::Index>(j)) = xs[j];
    }
    return mesh;
  }
  const std::size_t tc = *problem.time_coord;
  const std::vector<double> ts = evenly_spaced(problem.domain[tc], nt);
  Matrix mesh = Matrix::Zero(dims, static_cast<Eigen::Index>(nx * nt));
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::size_t j = 0; j < nx; ++j) {
      const auto col = static_cast<Eigen::Index>(k * nx + j);
      mesh(static_cast<Eigen::Index>(problem.space_coord), col) = xs[j];
      mesh(static_cast<Eigen::Index>(tc), col) = ts[k];
    }
  }
  return mesh;
}

/// Reference solution evaluated at every mesh column.
inline Vector reference_values(const PdeProblem& problem, const Matrix& mesh) {
  Vector out(mesh.cols());
  std::vector<double> pt(static_cast<std::size_t>(mesh.rows()));
  for (Eigen::Index k = 0; k < mesh.cols(); ++k) {
    for (std::size_t d = 0; d < pt.size(); ++d) {
      pt[d] = mesh(static_cast<Eigen::Index>(d), k);
    }
    out[k] = problem.reference(pt);
  }
  return out;
}

} // namespace psopinn
