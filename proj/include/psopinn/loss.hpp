#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psopinn/autodiff.hpp"
#include "psopinn/pde.hpp"
#include "psopinn/sampling.hpp"

namespace psopinn {

struct LossBreakdown {
  double residual = 0.0;
  double boundary = 0.0;
  double data = 0.0;
  double total = 0.0;
};

namespace detail {

inline std::string describe_point(const Matrix& pts, Eigen::Index k) {
  std::ostringstream out;
  out.precision(10);
  out << "(";
  for (Eigen::Index d = 0; d < pts.rows(); ++d) {
    out << (d ? ", " : "") << pts(d, k);
  }
  out << ")";
  return out.str();
}

// One mean-squared term evaluated on its own tape.
struct LossTerm {
  enum class Kind { residual, value, derivative, paired };

  Kind kind = Kind::value;
  std::string label;
  const BoundarySpec* spec = nullptr;
  Matrix points; // for paired terms: [a-side | b-side]
  Vector targets;
  std::size_t pairs = 0;
  std::unique_ptr<JetTape> tape;
  Matrix adjoint;

  [[nodiscard]] Eigen::Index samples() const {
    return kind == Kind::paired ? static_cast<Eigen::Index>(pairs) : points.cols();
  }
};

} // namespace detail

/// The PINN objective L = L_r + L_b + L_d over fixed point sets.
///
/// L_r is the mean squared residual, L_d the mean squared data misfit and L_b
/// the sum of one mean squared violation per condition: the initial condition
/// and each entry of problem.boundaries. Holds per-term tapes, so one
/// instance must not be shared between threads; copy it instead.
class PinnLoss {
public:
  PinnLoss(const PdeProblem& problem, const PointSets& sets, const Architecture& arch)
      : problem_(std::make_shared<const PdeProblem>(problem)), sets_(std::make_shared<const PointSets>(sets)),
        arch_(arch) {
    build();
  }

  PinnLoss(const PinnLoss& other) : problem_(other.problem_), sets_(other.sets_), arch_(other.arch_) { build(); }
  PinnLoss& operator=(const PinnLoss& other) {
    if (this != &other) {
      problem_ = other.problem_;
      sets_ = other.sets_;
      arch_ = other.arch_;
      build();
    }
    return *this;
  }
  PinnLoss(PinnLoss&&) noexcept = default;
  PinnLoss& operator=(PinnLoss&&) noexcept = default;

  [[nodiscard]] const PdeProblem& problem() const noexcept { return *problem_; }
  [[nodiscard]] const PointSets& point_sets() const noexcept { return *sets_; }
  [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }

  LossBreakdown evaluate(const Vector& theta) { return run(theta, nullptr); }

  /// Loss breakdown plus the full gradient written to `grad` (overwritten).
  LossBreakdown evaluate(const Vector& theta, Vector& grad) {
    grad = Vector::Zero(theta.size());
    return run(theta, &grad);
  }

  double value(const Vector& theta) { return evaluate(theta).total; }

  double value_and_gradient(const Vector& theta, Vector& grad) { return evaluate(theta, grad).total; }

private:
  using Term = detail::LossTerm;

  void build() {
    if (arch_.output_dim != 1) {
      throw std::invalid_argument("PinnLoss: scalar-output networks only");
    }
    if (problem_->dims() != arch_.input_dim) {
      throw std::invalid_argument("PinnLoss: network input_dim " + std::to_string(arch_.input_dim) +
                                  " does not match problem '" + problem_->name + "' (" +
                                  std::to_string(problem_->dims()) + " coordinates)");
    }
    const PointSets& s = *sets_;
    if (s.residual.cols() == 0) {
      throw std::invalid_argument("PinnLoss: residual point set is empty");
    }
    terms_.clear();
    {
      Term t;
      t.kind = Term::Kind::residual;
      t.label = "residual";
      t.points = s.residual;
      t.tape = std::make_unique<JetTape>(arch_, problem_->residual_channels, t.points);
      terms_.push_back(std::move(t));
    }
    boundary_begin_ = terms_.size();
    if (problem_->initial && s.initial.cols() > 0) {
      Term t;
      t.kind = Term::Kind::value;
      t.label = "initial condition";
      t.spec = &*problem_->initial;
      t.points = s.initial;
      t.targets = s.initial_targets;
      t.tape = std::make_unique<JetTape>(arch_, ChannelSet::value_only(), t.points);
      terms_.push_back(std::move(t));
    }
    for (const BoundaryGroup& g : s.boundary) {
      const BoundarySpec& spec = problem_->boundaries.at(g.spec);
      Term t;
      t.spec = &spec;
      t.label = "boundary '" + spec.name + "'";
      const ChannelSet channels = spec.uses_derivative() ? ChannelSet({spec.derivative_coord}, {})
                                                         : ChannelSet::value_only();
      if (spec.periodic()) {
        t.kind = Term::Kind::paired;
        t.pairs = static_cast<std::size_t>(g.points.cols());
        t.points.resize(g.points.rows(), 2 * g.points.cols());
        t.points << g.points, g.partner;
      } else {
        t.kind = spec.uses_derivative() ? Term::Kind::derivative : Term::Kind::value;
        t.points = g.points;
        t.targets = g.targets;
      }
      t.tape = std::make_unique<JetTape>(arch_, channels, t.points);
      terms_.push_back(std::move(t));
    }
    data_begin_ = terms_.size();
    if (s.data.cols() > 0) {
      Term t;
      t.kind = Term::Kind::value;
      t.label = "data";
      t.points = s.data;
      t.targets = s.data_values;
      t.tape = std::make_unique<JetTape>(arch_, ChannelSet::value_only(), t.points);
      terms_.push_back(std::move(t));
    }
  }

  LossBreakdown run(const Vector& theta, Vector* grad) {
    if (static_cast<std::size_t>(theta.size()) != param_count(arch_)) {
      throw std::invalid_argument("PinnLoss: theta has " + std::to_string(theta.size()) + " entries, expected " +
                                  std::to_string(param_count(arch_)));
    }
    LossBreakdown out;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const double v = term_value(terms_[i], theta, grad);
      if (i < boundary_begin_) {
        out.residual += v;
      } else if (i < data_begin_) {
        out.boundary += v;
      } else {
        out.data += v;
      }
    }
    out.total = out.residual + out.boundary + out.data;
    return out;
  }

  double term_value(Term& t, const Vector& theta, Vector* grad) {
    const Matrix& y = t.tape->forward(theta);
    const Eigen::Index n = t.samples();
    const double scale = 1.0 / static_cast<double>(n);
    Vector err(n);
    if (grad != nullptr) {
      t.adjoint.setZero(y.rows(), y.cols());
    }
    switch (t.kind) {
    case Term::Kind::residual:
      residual_errors(t, err, grad != nullptr ? scale : 0.0);
      break;
    case Term::Kind::value:
      err = t.tape->value().transpose() - t.targets;
      break;
    case Term::Kind::derivative:
      err = t.tape->d1(t.spec->derivative_coord).transpose() - t.targets;
      break;
    case Term::Kind::paired: {
      const std::size_t ch = t.spec->uses_derivative() ? t.tape->channels().first_channel(t.spec->derivative_coord) : 0;
      const auto f = t.tape->channel(ch);
      err = f.head(n).transpose() - t.spec->pair_sign * f.tail(n).transpose();
      break;
    }
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!std::isfinite(err[k])) {
        throw NonFiniteError(t.label, "value " + std::to_string(err[k]) + " at point " +
                                          detail::describe_point(t.points, k));
      }
    }
    if (grad != nullptr) {
      const double w = 2.0 * scale;
      const Eigen::Index total = t.points.cols();
      switch (t.kind) {
      case Term::Kind::residual:
        break; // filled by residual_errors
      case Term::Kind::value:
        t.adjoint.row(0).segment(t.tape->block(0), total) = w * err.transpose();
        break;
      case Term::Kind::derivative:
        t.adjoint.row(0).segment(t.tape->block(t.tape->channels().first_channel(t.spec->derivative_coord)), total) =
            w * err.transpose();
        break;
      case Term::Kind::paired: {
        const std::size_t ch = t.spec->uses_derivative() ? t.tape->channels().first_channel(t.spec->derivative_coord) : 0;
        t.adjoint.row(0).segment(t.tape->block(ch), n) = w * err.transpose();
        t.adjoint.row(0).segment(t.tape->block(ch) + n, n) = -t.spec->pair_sign * w * err.transpose();
        break;
      }
      }
      t.tape->backward(theta, t.adjoint, *grad);
    }
    return err.squaredNorm() * scale;
  }

  // Residuals per point; with scale > 0 also writes 2*scale*r*dr/d(jet) into the adjoint.
  void residual_errors(Term& t, Vector& err, double scale) {
    const ChannelSet& ch = t.tape->channels();
    const Eigen::Index n = t.points.cols();
    const Matrix& y = t.tape->output();
    std::array<double, max_coords> pt{};
    const auto dims = static_cast<std::size_t>(t.points.rows());
    for (Eigen::Index k = 0; k < n; ++k) {
      PointJet j;
      j.u = y(0, k);
      for (const std::size_t c : ch.first()) {
        j.d1[c] = y(0, t.tape->block(ch.first_channel(c)) + k);
      }
      for (const std::size_t c : ch.second()) {
        j.d2[c] = y(0, t.tape->block(ch.second_channel(c)) + k);
      }
      for (std::size_t d = 0; d < dims; ++d) {
        pt[d] = t.points(static_cast<Eigen::Index>(d), k);
      }
      const ResidualValue r = problem_->residual(j, std::span<const double>(pt.data(), dims));
      err[k] = r.value;
      if (scale > 0.0 && std::isfinite(r.value)) {
        const double w = 2.0 * scale * r.value;
        t.adjoint(0, k) = w * r.d_u;
        for (const std::size_t c : ch.first()) {
          t.adjoint(0, t.tape->block(ch.first_channel(c)) + k) = w * r.d_d1[c];
        }
        for (const std::size_t c : ch.second()) {
          t.adjoint(0, t.tape->block(ch.second_channel(c)) + k) = w * r.d_d2[c];
        }
      }
    }
  }

  std::shared_ptr<const PdeProblem> problem_;
  std::shared_ptr<const PointSets> sets_;
  Architecture arch_;
  std::vector<Term> terms_;
  std::size_t boundary_begin_ = 0;
  std::size_t data_begin_ = 0;
};

/// Mean squared residual of the network over `points` (dims x n).
inline double residual_loss(const NetworkParams& params, const PdeProblem& problem, const Matrix& points) {
  if (points.cols() == 0) {
    throw std::invalid_argument("residual_loss: empty point set");
  }
  PointSets s;
  s.residual = points;
  return PinnLoss(problem, s, params.architecture()).evaluate(params.theta()).residual;
}

/// Initial plus boundary part of the loss for the given point sets.
inline double boundary_loss(const NetworkParams& params, const PdeProblem& problem, const PointSets& sets) {
  PointSets s = sets;
  s.data.resize(static_cast<Eigen::Index>(problem.dims()), 0);
  if (s.residual.cols() == 0) {
    // The residual term is not reported here, but the evaluator needs one point.
    s.residual = Matrix::Zero(static_cast<Eigen::Index>(problem.dims()), 1);
    for (std::size_t d = 0; d < problem.dims(); ++d) {
      s.residual(static_cast<Eigen::Index>(d), 0) = 0.5 * (problem.domain[d].lo + problem.domain[d].hi);
    }
  }
  return PinnLoss(problem, s, params.architecture()).evaluate(params.theta()).boundary;
}

/// Mean squared misfit to (points, values); 0 for an empty set.
inline double data_loss(const NetworkParams& params, const Matrix& points, const Vector& values) {
  if (points.cols() != values.size()) {
    throw std::invalid_argument("data_loss: point/value count mismatch");
  }
  if (points.cols() == 0) {
    return 0.0;
  }
  JetTape tape(params.architecture(), ChannelSet::value_only(), points);
  tape.forward(params.theta());
  return (tape.value().transpose() - values).squaredNorm() / static_cast<double>(values.size());
}

inline LossBreakdown total_loss(const NetworkParams& params, const PdeProblem& problem, const PointSets& sets) {
  return PinnLoss(problem, sets, params.architecture()).evaluate(params.theta());
}

} // namespace psopinn
