#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "psopinn/rng.hpp"

namespace psopinn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { tanh };

/// Fully-connected tanh network shape: input -> hidden... -> output.
/// The output layer is affine (no activation).
struct Architecture {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  Activation activation = Activation::tanh;

  void validate() const {
    if (input_dim == 0 || output_dim == 0) {
      throw std::invalid_argument("Architecture: input_dim and output_dim must be >= 1");
    }
    for (const std::size_t w : hidden) {
      if (w == 0) {
        throw std::invalid_argument("Architecture: hidden widths must be >= 1");
      }
    }
  }

  /// Number of affine maps, i.e. hidden layers plus the output layer.
  [[nodiscard]] std::size_t layer_count() const noexcept { return hidden.size() + 1; }

  [[nodiscard]] std::size_t fan_in(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden.at(layer - 1);
  }

  [[nodiscard]] std::size_t fan_out(std::size_t layer) const {
    return layer == hidden.size() ? output_dim : hidden.at(layer);
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Position of one affine map inside the flat parameter vector.
struct LayerSlice {
  std::size_t weight_offset;
  std::size_t bias_offset;
  std::size_t fan_in;
  std::size_t fan_out;
};

/// Flattening order: layer 0..L-1; within a layer the fan_out x fan_in weight
/// matrix in row-major order, followed by the fan_out biases.
inline std::vector<LayerSlice> layer_layout(const Architecture& arch) {
  arch.validate();
  std::vector<LayerSlice> layout;
  layout.reserve(arch.layer_count());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const std::size_t in = arch.fan_in(l);
    const std::size_t out = arch.fan_out(l);
    layout.push_back({offset, offset + in * out, in, out});
    offset += in * out + out;
  }
  return layout;
}

inline std::size_t param_count(const Architecture& arch) {
  arch.validate();
  std::size_t count = 0;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    count += arch.fan_in(l) * arch.fan_out(l) + arch.fan_out(l);
  }
  return count;
}

/// A network: architecture plus its flat parameter vector theta.
class NetworkParams {
public:
  NetworkParams(Architecture arch, Vector theta) : arch_(std::move(arch)), theta_(std::move(theta)) {
    if (static_cast<std::size_t>(theta_.size()) != param_count(arch_)) {
      throw std::invalid_argument("NetworkParams: theta length " + std::to_string(theta_.size()) +
                                  " does not match parameter count " +
                                  std::to_string(param_count(arch_)));
    }
  }

  static NetworkParams zeros(const Architecture& arch) {
    return {arch, Vector::Zero(static_cast<Eigen::Index>(param_count(arch)))};
  }

  [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }
  [[nodiscard]] const Vector& theta() const noexcept { return theta_; }

  [[nodiscard]] Eigen::Map<const RowMajorMatrix> weights(std::size_t layer) const {
    const LayerSlice s = layer_layout(arch_).at(layer);
    return {theta_.data() + s.weight_offset, static_cast<Eigen::Index>(s.fan_out),
            static_cast<Eigen::Index>(s.fan_in)};
  }

  [[nodiscard]] Eigen::Map<const Vector> bias(std::size_t layer) const {
    const LayerSlice s = layer_layout(arch_).at(layer);
    return {theta_.data() + s.bias_offset, static_cast<Eigen::Index>(s.fan_out)};
  }

private:
  Architecture arch_;
  Vector theta_;
};

/// Per-layer weight list (unflattened view), layer order as in layer_layout.
struct LayerParams {
  RowMajorMatrix weight;
  Vector bias;
};

inline std::vector<LayerParams> unflatten(const Architecture& arch, const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != param_count(arch)) {
    throw std::invalid_argument("unflatten: theta length does not match architecture");
  }
  std::vector<LayerParams> layers;
  for (const LayerSlice& s : layer_layout(arch)) {
    const auto out = static_cast<Eigen::Index>(s.fan_out);
    const auto in = static_cast<Eigen::Index>(s.fan_in);
    layers.push_back({Eigen::Map<const RowMajorMatrix>(theta.data() + s.weight_offset, out, in),
                      Eigen::Map<const Vector>(theta.data() + s.bias_offset, out)});
  }
  return layers;
}

inline Vector flatten(const std::vector<LayerParams>& layers) {
  Eigen::Index total = 0;
  for (const LayerParams& p : layers) {
    total += p.weight.size() + p.bias.size();
  }
  Vector theta(total);
  Eigen::Index offset = 0;
  for (const LayerParams& p : layers) {
    Eigen::Map<RowMajorMatrix>(theta.data() + offset, p.weight.rows(), p.weight.cols()) = p.weight;
    offset += p.weight.size();
    theta.segment(offset, p.bias.size()) = p.bias;
    offset += p.bias.size();
  }
  return theta;
}

/// Weight initializer. Biases always start at zero.
struct InitScheme {
  enum class Kind { glorot_uniform, he_uniform, lecun_uniform, plain_uniform };

  Kind kind = Kind::glorot_uniform;
  double limit = 1.0; ///< only used by plain_uniform

  static InitScheme glorot() { return {Kind::glorot_uniform, 0.0}; }
  static InitScheme he() { return {Kind::he_uniform, 0.0}; }
  static InitScheme lecun() { return {Kind::lecun_uniform, 0.0}; }
  static InitScheme uniform(double limit = 1.0) { return {Kind::plain_uniform, limit}; }

  [[nodiscard]] double limit_for(std::size_t fan_in, std::size_t fan_out) const {
    switch (kind) {
    case Kind::glorot_uniform:
      return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    case Kind::he_uniform:
      return std::sqrt(6.0 / static_cast<double>(fan_in));
    case Kind::lecun_uniform:
      return std::sqrt(3.0 / static_cast<double>(fan_in));
    case Kind::plain_uniform:
      return limit;
    }
    return limit;
  }

  [[nodiscard]] std::string name() const {
    switch (kind) {
    case Kind::glorot_uniform:
      return "glorot";
    case Kind::he_uniform:
      return "he";
    case Kind::lecun_uniform:
      return "lecun";
    case Kind::plain_uniform:
      return "uniform:" + std::to_string(limit);
    }
    return "?";
  }

  /// Accepts glorot|xavier, he, lecun, uniform or uniform:<limit>.
  static InitScheme parse(const std::string& text) {
    if (text == "glorot" || text == "xavier" || text == "glorot_uniform") {
      return glorot();
    }
    if (text == "he" || text == "he_uniform") {
      return he();
    }
    if (text == "lecun" || text == "lecun_uniform") {
      return lecun();
    }
    if (text == "uniform") {
      return uniform();
    }
    if (text.rfind("uniform:", 0) == 0) {
      return uniform(std::stod(text.substr(8)));
    }
    throw std::invalid_argument("unknown init scheme '" + text + "'");
  }

  friend bool operator==(const InitScheme&, const InitScheme&) = default;
};

/// Draws weights uniformly in [-limit, limit] from the given stream.
inline Vector initialize(const Architecture& arch, const InitScheme& scheme, RandomStream& rng) {
  Vector theta = Vector::Zero(static_cast<Eigen::Index>(param_count(arch)));
  for (const LayerSlice& s : layer_layout(arch)) {
    const double limit = scheme.limit_for(s.fan_in, s.fan_out);
    for (std::size_t k = 0; k < s.fan_in * s.fan_out; ++k) {
      theta[static_cast<Eigen::Index>(s.weight_offset + k)] = rng.uniform(-limit, limit);
    }
  }
  return theta;
}

inline NetworkParams initialize(const Architecture& arch, const InitScheme& scheme,
                                std::uint64_t seed, std::uint64_t stream_id = 0) {
  RandomStream rng(seed, stream_id);
  return {arch, initialize(arch, scheme, rng)};
}

/// Plain per-point evaluation: tanh hidden layers, affine output layer.
inline Vector forward(const Architecture& arch, const Vector& theta, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != arch.input_dim) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) +
                                " coordinates, network expects " +
                                std::to_string(arch.input_dim));
  }
  if (static_cast<std::size_t>(theta.size()) != param_count(arch)) {
    throw std::invalid_argument("forward: theta length does not match architecture");
  }
  Vector h = x;
  const auto layout = layer_layout(arch);
  for (std::size_t l = 0; l < layout.size(); ++l) {
    const LayerSlice& s = layout[l];
    Eigen::Map<const RowMajorMatrix> w(theta.data() + s.weight_offset,
                                       static_cast<Eigen::Index>(s.fan_out),
                                       static_cast<Eigen::Index>(s.fan_in));
    Eigen::Map<const Vector> b(theta.data() + s.bias_offset, static_cast<Eigen::Index>(s.fan_out));
    Vector a = w * h + b;
    if (l + 1 < layout.size()) {
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a[i] = std::tanh(a[i]);
      }
    }
    h = std::move(a);
  }
  return h;
}

inline Vector forward(const NetworkParams& params, const Vector& x) {
  return forward(params.architecture(), params.theta(), x);
}

} // namespace psopinn
