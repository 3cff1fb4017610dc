#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "psopinn/loss.hpp"
#include "psopinn/network.hpp"
#include "psopinn/rng.hpp"

namespace psopinn {

enum class Variant { pso, pso_bp, pso_bp_cd };

inline std::string to_string(Variant v) {
  switch (v) {
  case Variant::pso:
    return "pso";
  case Variant::pso_bp:
    return "pso_bp";
  case Variant::pso_bp_cd:
    return "pso_bp_cd";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "pso") {
    return Variant::pso;
  }
  if (s == "pso_bp" || s == "pso-bp") {
    return Variant::pso_bp;
  }
  if (s == "pso_bp_cd" || s == "pso-bp-cd") {
    return Variant::pso_bp_cd;
  }
  throw std::invalid_argument("unknown optimizer variant '" + s + "' (pso, pso_bp, pso_bp_cd)");
}

/// eq: both coefficients scaled by (1 - 2/n) each iteration.
/// alg: c1 -= 2 c1 / t and c2 -= c2 / t at iteration t, as the pseudo-code listing prints it.
enum class DecayRule { eq, alg };

inline std::string to_string(DecayRule r) { return r == DecayRule::eq ? "eq" : "alg"; }

inline DecayRule parse_decay_rule(const std::string& s) {
  if (s == "eq") {
    return DecayRule::eq;
  }
  if (s == "alg") {
    return DecayRule::alg;
  }
  throw std::invalid_argument("unknown decay rule '" + s + "' (eq, alg)");
}

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step_count = 0;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState fresh(Eigen::Index n, double beta1 = 0.99, double beta2 = 0.999, double eps = 1e-8) {
    return {Vector::Zero(n), Vector::Zero(n), 0, beta1, beta2, eps};
  }
};

/// Bias-corrected ADAM. Updates the moments and returns the step to add to
/// theta (already scaled by -alpha).
inline Vector adam_step(const Vector& grad, AdamState& s, double alpha) {
  if (grad.size() != s.m.size()) {
    throw std::invalid_argument("adam_step: gradient length " + std::to_string(grad.size()) +
                                " does not match state length " + std::to_string(s.m.size()));
  }
  if (!grad.allFinite()) {
    throw NonFiniteError("gradient", "passed to adam_step");
  }
  ++s.step_count;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));
  return (-alpha * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps)).matrix();
}

/// Applies one ADAM update in place and returns the step taken.
inline Vector adam_update(Vector& theta, const Vector& grad, AdamState& s, double alpha) {
  Vector step = adam_step(grad, s, alpha);
  theta += step;
  return step;
}

/// beta v + c1 r1 (p_best - theta) + c2 r2 (g_best - theta), scalar r1, r2.
inline Vector pso_velocity(const Vector& v, const Vector& theta, const Vector& p_best, const Vector& g_best, double beta,
                           double c1, double c2, double r1, double r2) {
  return beta * v + (c1 * r1) * (p_best - theta) + (c2 * r2) * (g_best - theta);
}

/// Per-coordinate draws: r1, r2 are vectors of the parameter length.
inline Vector pso_velocity(const Vector& v, const Vector& theta, const Vector& p_best, const Vector& g_best, double beta,
                           double c1, double c2, const Vector& r1, const Vector& r2) {
  return beta * v + c1 * r1.cwiseProduct(p_best - theta) + c2 * r2.cwiseProduct(g_best - theta);
}

/// PSO velocity plus a descent step (the ADAM step vector, which already carries -alpha).
inline Vector pso_bp_velocity(const Vector& v, const Vector& theta, const Vector& p_best, const Vector& g_best,
                              double beta, double c1, double c2, double r1, double r2, const Vector& descent_step) {
  return pso_velocity(v, theta, p_best, g_best, beta, c1, c2, r1, r2) + descent_step;
}

/// One decay step. `t` is the 1-based iteration just completed (alg rule only).
inline std::pair<double, double> decay_coefficients(double c1, double c2, std::size_t n, DecayRule rule = DecayRule::eq,
                                                    std::size_t t = 1) {
  if (n == 0) {
    throw std::invalid_argument("decay_coefficients: need n >= 1");
  }
  double a = c1;
  double b = c2;
  if (rule == DecayRule::eq) {
    const double f = 1.0 - 2.0 / static_cast<double>(n);
    a = c1 * f;
    b = c2 * f;
  } else {
    if (t == 0) {
      throw std::invalid_argument("decay_coefficients: alg rule needs t >= 1");
    }
    const auto tt = static_cast<double>(t);
    a = c1 - 2.0 * c1 / tt;
    b = c2 - c2 / tt;
  }
  return {std::max(a, 0.0), std::max(b, 0.0)};
}

struct PsoHyperparams {
  Variant variant = Variant::pso_bp_cd;
  double alpha = 0.005;
  double beta = 0.99;
  double c1 = 0.08;
  double c2 = 0.5;
  std::size_t iterations = 2000;
  DecayRule decay_rule = DecayRule::eq;
  /// Draw r1, r2 per coordinate instead of one scalar per particle.
  bool per_coordinate_r = false;
  double adam_beta1 = 0.99;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Descent term of the gradient variants: the ADAM step (default) or the
  /// plain -alpha * grad written in the velocity equation.
  bool plain_gradient = false;
  /// Half-width of a uniform initial velocity; 0 gives v0 = 0.
  double initial_velocity = 0.0;

  void validate() const {
    if (variant != Variant::pso && !(alpha > 0.0)) {
      throw std::invalid_argument("PsoHyperparams: alpha must be > 0 for gradient variants");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
      throw std::invalid_argument("PsoHyperparams: beta must lie in [0, 1]");
    }
    if (!(c1 >= 0.0) || !(c2 >= 0.0)) {
      throw std::invalid_argument("PsoHyperparams: c1 and c2 must be non-negative");
    }
    if (iterations == 0) {
      throw std::invalid_argument("PsoHyperparams: iterations must be >= 1");
    }
  }

  [[nodiscard]] bool uses_gradient() const noexcept { return variant != Variant::pso; }
};

struct Particle {
  Vector theta;
  Vector velocity;
  Vector p_best;
  double p_best_loss = std::numeric_limits<double>::infinity();
  double loss = std::numeric_limits<double>::infinity();
  Vector grad; ///< gradient at theta (gradient variants only)
  AdamState adam;
};

struct SwarmState {
  std::vector<Particle> particles;
  Vector g_best;
  double g_best_loss = std::numeric_limits<double>::infinity();
  std::size_t g_best_index = 0;
  std::size_t iteration = 0;
  double c1 = 0.0;
  double c2 = 0.0;

  /// Index of the particle with the lowest current loss (ties: lowest index).
  [[nodiscard]] std::size_t best_current() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < particles.size(); ++i) {
      if (particles[i].loss < particles[best].loss) {
        best = i;
      }
    }
    return best;
  }
};

/// Loss statistics over the swarm at one iteration (iteration 0 is the initial swarm).
struct HistoryRow {
  std::size_t iteration = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

struct TrainEvent {
  std::size_t iteration = 0;
  std::size_t particle = 0;
  std::string message;
};

struct TrainResult {
  SwarmState swarm;
  std::vector<HistoryRow> history;
  std::vector<TrainEvent> events;
};

/// Worker count from PSOPINN_THREADS, else hardware concurrency.
inline std::size_t thread_count() {
  if (const char* env = std::getenv("PSOPINN_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) {
        return static_cast<std::size_t>(n);
      }
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("PSOPINN_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace detail {

// Runs body(worker, index) over [0, n) in contiguous blocks, one per worker.
template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      body(0, i);
    }
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) {
          body(w, i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) {
    t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

inline HistoryRow summarize(const SwarmState& s) {
  HistoryRow row;
  row.iteration = s.iteration;
  row.c1 = s.c1;
  row.c2 = s.c2;
  const auto n = static_cast<double>(s.particles.size());
  row.min = std::numeric_limits<double>::infinity();
  row.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const Particle& p : s.particles) {
    sum += p.loss;
    row.min = std::min(row.min, p.loss);
    row.max = std::max(row.max, p.loss);
  }
  row.mean = sum / n;
  double ss = 0.0;
  for (const Particle& p : s.particles) {
    ss += (p.loss - row.mean) * (p.loss - row.mean);
  }
  row.std = s.particles.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return row;
}

inline void update_global_best(SwarmState& s) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.particles.size(); ++i) {
    if (s.particles[i].p_best_loss < s.particles[best].p_best_loss) {
      best = i;
    }
  }
  if (s.g_best.size() == 0 || s.particles[best].p_best_loss < s.g_best_loss) {
    s.g_best = s.particles[best].p_best;
    s.g_best_loss = s.particles[best].p_best_loss;
    s.g_best_index = best;
  }
}

// Loss (and gradient when requested) at theta; nullopt on a non-finite result.
inline std::optional<std::string> evaluate_at(PinnLoss& loss, const Vector& theta, bool with_grad, double& value,
                                              Vector& grad) {
  try {
    value = with_grad ? loss.evaluate(theta, grad).total : loss.evaluate(theta).total;
  } catch (const NonFiniteError& e) {
    return std::string(e.what());
  }
  if (!std::isfinite(value)) {
    return "non-finite loss " + std::to_string(value);
  }
  if (with_grad && !grad.allFinite()) {
    return std::string("non-finite gradient");
  }
  return std::nullopt;
}

} // namespace detail

using IterationCallback = std::function<void(const SwarmState&)>;

/// The swarm training loop.
///
/// Per iteration, every particle independently draws (r1, r2) from its own
/// stream, updates its velocity per variant, moves, evaluates the loss at the
/// new position and updates p_best on strict improvement. After all
/// particles, g_best is the lowest p_best (ties: lowest index), then the
/// cd variant decays c1 and c2. A move producing a non-finite loss is undone,
/// the particle's velocity zeroed and its ADAM state restored.
///
/// Initial positions come from stream init_base + i, velocity draws from
/// velocity_base + i, so the result does not depend on the worker count.
inline TrainResult train_swarm(const PinnLoss& objective, const InitScheme& init, const PsoHyperparams& hp,
                               std::size_t population, std::uint64_t seed, const IterationCallback& on_iteration = {}) {
  hp.validate();
  if (population == 0) {
    throw std::invalid_argument("train_swarm: population must be >= 1");
  }
  const Architecture& arch = objective.architecture();
  const auto dim = static_cast<Eigen::Index>(param_count(arch));
  const bool grad_needed = hp.uses_gradient();
  const std::size_t workers = std::min(thread_count(), population);
  std::vector<PinnLoss> losses(workers, objective);

  TrainResult result;
  SwarmState& s = result.swarm;
  s.c1 = hp.c1;
  s.c2 = hp.c2;
  s.particles.resize(population);
  std::vector<RandomStream> rngs;
  rngs.reserve(population);
  for (std::size_t i = 0; i < population; ++i) {
    rngs.emplace_back(seed, streams::velocity_base + i);
  }
  std::vector<std::optional<std::string>> failures(population);

  detail::parallel_for(population, workers, [&](std::size_t w, std::size_t i) {
    Particle& p = s.particles[i];
    RandomStream init_rng(seed, streams::init_base + i);
    p.theta = initialize(arch, init, init_rng);
    p.velocity = Vector::Zero(dim);
    if (hp.initial_velocity > 0.0) {
      RandomStream vrng(seed, streams::initial_velocity_base + i);
      for (Eigen::Index k = 0; k < dim; ++k) {
        p.velocity[k] = vrng.uniform(-hp.initial_velocity, hp.initial_velocity);
      }
    }
    p.adam = AdamState::fresh(dim, hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
    failures[i] = detail::evaluate_at(losses[w], p.theta, grad_needed, p.loss, p.grad);
    p.p_best = p.theta;
    p.p_best_loss = p.loss;
  });
  for (std::size_t i = 0; i < population; ++i) {
    if (failures[i]) {
      throw NonFiniteError("initial loss", "particle " + std::to_string(i) + ": " + *failures[i]);
    }
  }
  detail::update_global_best(s);
  result.history.push_back(detail::summarize(s));
  if (on_iteration) {
    on_iteration(s);
  }

  for (std::size_t t = 1; t <= hp.iterations; ++t) {
    s.iteration = t;
    const double c1 = s.c1;
    const double c2 = s.c2;
    const Vector g_best = s.g_best;
    detail::parallel_for(population, workers, [&](std::size_t w, std::size_t i) {
      Particle& p = s.particles[i];
      RandomStream& rng = rngs[i];
      Vector v;
      if (hp.per_coordinate_r) {
        Vector r1(dim);
        Vector r2(dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
          r1[k] = rng.uniform();
        }
        for (Eigen::Index k = 0; k < dim; ++k) {
          r2[k] = rng.uniform();
        }
        v = pso_velocity(p.velocity, p.theta, p.p_best, g_best, hp.beta, c1, c2, r1, r2);
      } else {
        const double r1 = rng.uniform();
        const double r2 = rng.uniform();
        v = pso_velocity(p.velocity, p.theta, p.p_best, g_best, hp.beta, c1, c2, r1, r2);
      }
      const AdamState saved = grad_needed ? p.adam : AdamState{};
      if (grad_needed) {
        if (hp.plain_gradient) {
          v -= hp.alpha * p.grad;
        } else {
          v += adam_step(p.grad, p.adam, hp.alpha);
        }
      }
      Vector moved = p.theta + v;
      double value = 0.0;
      Vector grad;
      failures[i] = detail::evaluate_at(losses[w], moved, grad_needed, value, grad);
      if (failures[i]) {
        p.velocity.setZero();
        if (grad_needed) {
          p.adam = saved;
        }
        return;
      }
      p.theta = std::move(moved);
      p.velocity = std::move(v);
      p.loss = value;
      if (grad_needed) {
        p.grad = std::move(grad);
      }
      if (value < p.p_best_loss) {
        p.p_best = p.theta;
        p.p_best_loss = value;
      }
    });
    for (std::size_t i = 0; i < population; ++i) {
      if (failures[i]) {
        result.events.push_back({t, i, "move rejected: " + *failures[i]});
      }
    }
    detail::update_global_best(s);
    HistoryRow row = detail::summarize(s);
    row.c1 = c1;
    row.c2 = c2;
    result.history.push_back(row);
    if (hp.variant == Variant::pso_bp_cd) {
      std::tie(s.c1, s.c2) = decay_coefficients(s.c1, s.c2, hp.iterations, hp.decay_rule, t);
    }
    if (on_iteration) {
      on_iteration(s);
    }
  }
  return result;
}

struct AdamHyperparams {
  double alpha = 0.001;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t iterations = 2000;
};

/// Independent ADAM training of `population` networks, initialised exactly as
/// train_swarm would. Returned as a SwarmState (velocities zero, p_best the
/// best visited position) so ensemble code treats both the same way.
inline TrainResult train_adam_ensemble(const PinnLoss& objective, const InitScheme& init, const AdamHyperparams& hp,
                                       std::size_t population, std::uint64_t seed,
                                       const IterationCallback& on_iteration = {}) {
  if (population == 0) {
    throw std::invalid_argument("train_adam_ensemble: population must be >= 1");
  }
  if (!(hp.alpha > 0.0) || hp.iterations == 0) {
    throw std::invalid_argument("train_adam_ensemble: need alpha > 0 and iterations >= 1");
  }
  const Architecture& arch = objective.architecture();
  const auto dim = static_cast<Eigen::Index>(param_count(arch));
  const std::size_t workers = std::min(thread_count(), population);
  std::vector<PinnLoss> losses(workers, objective);

  TrainResult result;
  SwarmState& s = result.swarm;
  s.particles.resize(population);
  std::vector<std::optional<std::string>> failures(population);
  detail::parallel_for(population, workers, [&](std::size_t w, std::size_t i) {
    Particle& p = s.particles[i];
    RandomStream init_rng(seed, streams::init_base + i);
    p.theta = initialize(arch, init, init_rng);
    p.velocity = Vector::Zero(dim);
    p.adam = AdamState::fresh(dim, hp.beta1, hp.beta2, hp.eps);
    failures[i] = detail::evaluate_at(losses[w], p.theta, true, p.loss, p.grad);
    p.p_best = p.theta;
    p.p_best_loss = p.loss;
  });
  for (std::size_t i = 0; i < population; ++i) {
    if (failures[i]) {
      throw NonFiniteError("initial loss", "network " + std::to_string(i) + ": " + *failures[i]);
    }
  }
  detail::update_global_best(s);
  result.history.push_back(detail::summarize(s));
  if (on_iteration) {
    on_iteration(s);
  }
  std::vector<bool> stopped(population, false);
  for (std::size_t t = 1; t <= hp.iterations; ++t) {
    s.iteration = t;
    detail::parallel_for(population, workers, [&](std::size_t w, std::size_t i) {
      Particle& p = s.particles[i];
      if (stopped[i]) {
        return;
      }
      Vector moved = p.theta;
      const AdamState saved = p.adam;
      adam_update(moved, p.grad, p.adam, hp.alpha);
      double value = 0.0;
      Vector grad;
      failures[i] = detail::evaluate_at(losses[w], moved, true, value, grad);
      if (failures[i]) {
        p.adam = saved;
        return;
      }
      p.theta = std::move(moved);
      p.loss = value;
      p.grad = std::move(grad);
      if (value < p.p_best_loss) {
        p.p_best = p.theta;
        p.p_best_loss = value;
      }
    });
    for (std::size_t i = 0; i < population; ++i) {
      if (failures[i]) {
        // A deterministic gradient step would fail again; freeze the network.
        stopped[i] = true;
        result.events.push_back({t, i, "network frozen: " + *failures[i]});
      }
    }
    detail::update_global_best(s);
    result.history.push_back(detail::summarize(s));
    if (on_iteration) {
      on_iteration(s);
    }
  }
  return result;
}

} // namespace psopinn
