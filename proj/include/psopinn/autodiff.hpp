#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "psopinn/network.hpp"

namespace psopinn {

/// Network output at one point together with its pure input derivatives.
struct Jet2 {
  double value = 0.0;
  std::vector<double> d1; ///< du/dx_i for every input coordinate
  std::vector<double> d2; ///< d2u/dx_i^2 for every input coordinate
};

/// Raised whenever a loss, residual or gradient leaves the finite range.
class NonFiniteError : public std::runtime_error {
public:
  NonFiniteError(std::string term, const std::string& detail)
      : std::runtime_error("non-finite " + term + ": " + detail), term_(std::move(term)) {}

  [[nodiscard]] const std::string& term() const noexcept { return term_; }

private:
  std::string term_;
};

/// Which input derivatives a batched evaluation carries.
///
/// Channel 0 is the value, then one channel per coordinate in `first`, then
/// one per coordinate in `second`. A coordinate listed in `second` is always
/// also carried in `first` (the second-order jet needs it).
class ChannelSet {
public:
  ChannelSet() = default;

  ChannelSet(std::vector<std::size_t> first, std::vector<std::size_t> second)
      : first_(std::move(first)), second_(std::move(second)) {
    for (const std::size_t c : second_) {
      if (std::find(first_.begin(), first_.end(), c) == first_.end()) {
        first_.push_back(c);
      }
    }
    dedupe(first_);
    dedupe(second_);
  }

  static ChannelSet value_only() { return {}; }

  static ChannelSet full(std::size_t input_dim) {
    std::vector<std::size_t> all(input_dim);
    for (std::size_t i = 0; i < input_dim; ++i) {
      all[i] = i;
    }
    return {all, all};
  }

  [[nodiscard]] std::size_t count() const noexcept { return 1 + first_.size() + second_.size(); }
  [[nodiscard]] const std::vector<std::size_t>& first() const noexcept { return first_; }
  [[nodiscard]] const std::vector<std::size_t>& second() const noexcept { return second_; }

  /// Channel index carrying du/dx_coord.
  [[nodiscard]] std::size_t first_channel(std::size_t coord) const {
    const auto it = std::find(first_.begin(), first_.end(), coord);
    if (it == first_.end()) {
      throw std::out_of_range("ChannelSet: coordinate " + std::to_string(coord) +
                              " has no first-derivative channel");
    }
    return 1 + static_cast<std::size_t>(it - first_.begin());
  }

  /// Channel index carrying d2u/dx_coord^2.
  [[nodiscard]] std::size_t second_channel(std::size_t coord) const {
    const auto it = std::find(second_.begin(), second_.end(), coord);
    if (it == second_.end()) {
      throw std::out_of_range("ChannelSet: coordinate " + std::to_string(coord) +
                              " has no second-derivative channel");
    }
    return 1 + first_.size() + static_cast<std::size_t>(it - second_.begin());
  }

  [[nodiscard]] bool has_first(std::size_t coord) const {
    return std::find(first_.begin(), first_.end(), coord) != first_.end();
  }
  [[nodiscard]] bool has_second(std::size_t coord) const {
    return std::find(second_.begin(), second_.end(), coord) != second_.end();
  }

private:
  static void dedupe(std::vector<std::size_t>& v) {
    std::vector<std::size_t> out;
    for (const std::size_t c : v) {
      if (std::find(out.begin(), out.end(), c) == out.end()) {
        out.push_back(c);
      }
    }
    v = std::move(out);
  }

  std::vector<std::size_t> first_;
  std::vector<std::size_t> second_;
};

/// Batched truncated-Taylor evaluation of a tanh network over a fixed point set,
/// with reverse accumulation of parameter gradients.
///
/// Every channel of every point is one column of a (width x channels*n) block
/// matrix, so each layer is a single matrix product. For a hidden layer with
/// pre-activation jet (a, a_i, a_ii) and s = tanh(a):
///   y = s,  y_i = s' a_i,  y_ii = s'' a_i^2 + s' a_ii
/// with s' = 1 - s^2 and s'' = -2 s s'. tanh is evaluated as 1 - 2/(e^{2a}+1)
/// so the exponential vectorizes; it saturates correctly at both ends.
class JetTape {
public:
  JetTape(const Architecture& arch, ChannelSet channels, const Matrix& points)
      : arch_(arch), layout_(layer_layout(arch)), channels_(std::move(channels)),
        n_(points.cols()) {
    if (static_cast<std::size_t>(points.rows()) != arch.input_dim) {
      throw std::invalid_argument("JetTape: points have " + std::to_string(points.rows()) +
                                  " rows, network expects " + std::to_string(arch.input_dim));
    }
    for (const std::size_t c : channels_.first()) {
      if (c >= arch.input_dim) {
        throw std::invalid_argument("JetTape: derivative coordinate out of range");
      }
    }
    const auto cols = static_cast<Eigen::Index>(channels_.count()) * n_;
    const std::size_t hidden = arch.hidden.size();
    inputs_.resize(hidden + 1);
    pre_.resize(hidden);
    act_.resize(hidden);
    slope_.resize(hidden);

    inputs_[0] = Matrix::Zero(static_cast<Eigen::Index>(arch.input_dim), cols);
    inputs_[0].leftCols(n_) = points;
    for (std::size_t j = 0; j < channels_.first().size(); ++j) {
      inputs_[0].row(static_cast<Eigen::Index>(channels_.first()[j])).segment(block(j + 1), n_).setOnes();
    }
    for (std::size_t l = 0; l < hidden; ++l) {
      const auto width = static_cast<Eigen::Index>(arch.hidden[l]);
      pre_[l].resize(width, cols);
      inputs_[l + 1].resize(width, cols);
      act_[l].resize(width, n_);
      slope_[l].resize(width, n_);
    }
    output_.resize(static_cast<Eigen::Index>(arch.output_dim), cols);
  }

  [[nodiscard]] Eigen::Index size() const noexcept { return n_; }
  [[nodiscard]] const ChannelSet& channels() const noexcept { return channels_; }
  [[nodiscard]] const Matrix& output() const noexcept { return output_; }
  [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }

  /// Column offset of channel `c` inside the output block.
  [[nodiscard]] Eigen::Index block(std::size_t channel) const noexcept {
    return static_cast<Eigen::Index>(channel) * n_;
  }

  /// Outputs for all channels: output_dim x (channels * n).
  const Matrix& forward(const Vector& theta) {
    check_theta(theta);
    const Matrix* in = &inputs_[0];
    const std::size_t last = layout_.size() - 1;
    for (std::size_t l = 0; l < layout_.size(); ++l) {
      const LayerSlice& s = layout_[l];
      const auto w = weights(theta, s);
      const Eigen::Map<const Vector> b(theta.data() + s.bias_offset, static_cast<Eigen::Index>(s.fan_out));
      Matrix& dst = l == last ? output_ : pre_[l];
      dst.noalias() = w * (*in);
      dst.leftCols(n_).colwise() += b;
      if (l != last) {
        activate(l);
        in = &inputs_[l + 1];
      }
    }
    return output_;
  }

  /// Output block of channel `c` for output component `out`.
  [[nodiscard]] auto channel(std::size_t c, Eigen::Index out = 0) const {
    return output_.row(out).segment(block(c), n_);
  }
  [[nodiscard]] auto value(Eigen::Index out = 0) const { return channel(0, out); }
  [[nodiscard]] auto d1(std::size_t coord, Eigen::Index out = 0) const {
    return channel(channels_.first_channel(coord), out);
  }
  [[nodiscard]] auto d2(std::size_t coord, Eigen::Index out = 0) const {
    return channel(channels_.second_channel(coord), out);
  }

  /// Accumulates d(sum adjoint .* outputs)/d(theta) into `grad`.
  /// Must follow forward() with the same theta.
  void backward(const Vector& theta, const Matrix& output_adjoint, Vector& grad) {
    check_theta(theta);
    if (grad.size() != theta.size()) {
      throw std::invalid_argument("JetTape::backward: gradient length mismatch");
    }
    if (output_adjoint.rows() != output_.rows() || output_adjoint.cols() != output_.cols()) {
      throw std::invalid_argument("JetTape::backward: adjoint shape mismatch");
    }
    const std::size_t last = layout_.size() - 1;
    accumulate(layout_[last], output_adjoint, inputs_[last], grad);
    if (last == 0) {
      return;
    }
    h_bar_.noalias() = weights(theta, layout_[last]).transpose() * output_adjoint;
    for (std::size_t l = last; l-- > 0;) {
      activation_adjoint(l);
      accumulate(layout_[l], a_bar_, inputs_[l], grad);
      if (l > 0) {
        h_bar_.noalias() = weights(theta, layout_[l]).transpose() * a_bar_;
      }
    }
  }

private:
  void check_theta(const Vector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != layout_.back().bias_offset + layout_.back().fan_out) {
      throw std::invalid_argument("JetTape: theta length does not match architecture");
    }
  }

  static Eigen::Map<const RowMajorMatrix> weights(const Vector& theta, const LayerSlice& s) {
    return {theta.data() + s.weight_offset, static_cast<Eigen::Index>(s.fan_out),
            static_cast<Eigen::Index>(s.fan_in)};
  }

  void activate(std::size_t l) {
    const Matrix& a = pre_[l];
    Matrix& h = inputs_[l + 1];
    Matrix& s = act_[l];
    Matrix& ds = slope_[l];
    s = 1.0 - 2.0 / ((2.0 * a.leftCols(n_).array()).exp() + 1.0);
    ds = 1.0 - s.array().square();
    h.leftCols(n_) = s;
    const std::size_t nf = channels_.first().size();
    for (std::size_t j = 0; j < nf; ++j) {
      h.middleCols(block(j + 1), n_) = ds.array() * a.middleCols(block(j + 1), n_).array();
    }
    for (std::size_t k = 0; k < channels_.second().size(); ++k) {
      const std::size_t cf = channels_.first_channel(channels_.second()[k]);
      const std::size_t cs = 1 + nf + k;
      const auto a1 = a.middleCols(block(cf), n_).array();
      h.middleCols(block(cs), n_) =
          -2.0 * s.array() * ds.array() * a1.square() + ds.array() * a.middleCols(block(cs), n_).array();
    }
  }

  // a_bar from h_bar for hidden layer l (reverse of activate).
  void activation_adjoint(std::size_t l) {
    const Matrix& a = pre_[l];
    const auto s = act_[l].array();
    const auto ds = slope_[l].array();
    a_bar_.resize(a.rows(), a.cols());
    const std::size_t nf = channels_.first().size();
    auto v_bar = a_bar_.leftCols(n_).array();
    v_bar = h_bar_.leftCols(n_).array() * ds;
    if (nf == 0) {
      return;
    }
    d2s_ = -2.0 * s * ds;
    for (std::size_t j = 0; j < nf; ++j) {
      const auto hb = h_bar_.middleCols(block(j + 1), n_).array();
      v_bar += hb * a.middleCols(block(j + 1), n_).array() * d2s_.array();
      a_bar_.middleCols(block(j + 1), n_) = hb * ds;
    }
    if (channels_.second().empty()) {
      return;
    }
    d3s_ = -2.0 * ds * (ds - 2.0 * s.square());
    for (std::size_t k = 0; k < channels_.second().size(); ++k) {
      const std::size_t cf = channels_.first_channel(channels_.second()[k]);
      const std::size_t cs = 1 + nf + k;
      const auto hb = h_bar_.middleCols(block(cs), n_).array();
      const auto a1 = a.middleCols(block(cf), n_).array();
      const auto a2 = a.middleCols(block(cs), n_).array();
      v_bar += hb * (d3s_.array() * a1.square() + d2s_.array() * a2);
      a_bar_.middleCols(block(cf), n_).array() += 2.0 * hb * d2s_.array() * a1;
      a_bar_.middleCols(block(cs), n_) = hb * ds;
    }
  }

  void accumulate(const LayerSlice& s, const Matrix& adjoint, const Matrix& input, Vector& grad) const {
    Eigen::Map<RowMajorMatrix> gw(grad.data() + s.weight_offset, static_cast<Eigen::Index>(s.fan_out),
                                  static_cast<Eigen::Index>(s.fan_in));
    gw.noalias() += adjoint * input.transpose();
    Eigen::Map<Vector> gb(grad.data() + s.bias_offset, static_cast<Eigen::Index>(s.fan_out));
    gb += adjoint.leftCols(n_).rowwise().sum();
  }

  Architecture arch_;
  std::vector<LayerSlice> layout_;
  ChannelSet channels_;
  Eigen::Index n_;
  std::vector<Matrix> inputs_; // inputs_[l] feeds affine map l
  std::vector<Matrix> pre_;    // pre-activations of hidden layers
  std::vector<Matrix> act_;    // tanh of the value block
  std::vector<Matrix> slope_;  // 1 - tanh^2 of the value block
  Matrix output_;
  Matrix h_bar_;
  Matrix a_bar_;
  Matrix d2s_;
  Matrix d3s_;
};

/// Exact value and pure first/second input derivatives at one point.
inline Jet2 eval_jet(const Architecture& arch, const Vector& theta, const Vector& x,
                     Eigen::Index output = 0) {
  if (static_cast<std::size_t>(x.size()) != arch.input_dim) {
    throw std::invalid_argument("eval_jet: input has " + std::to_string(x.size()) +
                                " coordinates, network expects " + std::to_string(arch.input_dim));
  }
  JetTape tape(arch, ChannelSet::full(arch.input_dim), Matrix(x));
  tape.forward(theta);
  Jet2 jet;
  jet.value = tape.value(output)(0);
  for (std::size_t i = 0; i < arch.input_dim; ++i) {
    jet.d1.push_back(tape.d1(i, output)(0));
    jet.d2.push_back(tape.d2(i, output)(0));
  }
  return jet;
}

inline Jet2 eval_jet(const NetworkParams& params, const Vector& x) {
  return eval_jet(params.architecture(), params.theta(), x);
}

struct GradientRecord {
  double loss_value = 0.0;
  Vector grad_theta;
};

/// Anything that can report its value and accumulate its parameter gradient.
template <typename F>
concept DifferentiableObjective = requires(F& f, const Vector& theta, Vector& grad) {
  { f.value(theta) } -> std::convertible_to<double>;
  { f.value_and_gradient(theta, grad) } -> std::convertible_to<double>;
};

/// Evaluates loss and gradient and rejects non-finite results.
template <DifferentiableObjective Objective>
GradientRecord loss_gradient(const Vector& theta, Objective& objective) {
  GradientRecord record;
  record.grad_theta = Vector::Zero(theta.size());
  record.loss_value = objective.value_and_gradient(theta, record.grad_theta);
  if (!std::isfinite(record.loss_value)) {
    throw NonFiniteError("loss", "value " + std::to_string(record.loss_value));
  }
  for (Eigen::Index i = 0; i < record.grad_theta.size(); ++i) {
    if (!std::isfinite(record.grad_theta[i])) {
      throw NonFiniteError("gradient", "component " + std::to_string(i));
    }
  }
  return record;
}

template <DifferentiableObjective Objective>
GradientRecord loss_gradient(const NetworkParams& params, Objective& objective) {
  return loss_gradient(params.theta(), objective);
}

/// Central finite-difference gradient, used as the independent oracle for
/// loss_gradient in tests and in the `check` command.
template <typename Objective>
Vector finite_difference_gradient(const Vector& theta, Objective& objective, double step = 1e-5) {
  Vector grad(theta.size());
  Vector probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = objective.value(probe);
    probe[i] = orig - step;
    const double down = objective.value(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

} // namespace psopinn
