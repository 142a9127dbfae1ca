#pragma once

// Multilayer perceptrons viewed as a learned basis with linear coefficients:
//
//     N(x; theta) = sum_k theta^O_k * mask(x) * h_k(x; theta^I)
//
// where h_k are the neurons of the last hidden layer. The output layer has no
// bias, so theta^O is exactly the output weight vector.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "newtonlab/diffgraph.hpp"
#include "newtonlab/errors.hpp"
#include "newtonlab/jet.hpp"
#include "newtonlab/matrix.hpp"

namespace newtonlab {

enum class Activation { tanh, sine };
enum class BoundaryMask { none, sine, sine_product };

struct FourierFeatures {
  int features = 0;
  double variance = 1.0;
};

struct ModelSpec {
  int input_dim = 1;
  std::vector<int> hidden_widths;
  Activation activation = Activation::tanh;
  double omega0 = 1.0;  // sine activation computes sin(omega0 * z)
  std::optional<FourierFeatures> fourier;
  BoundaryMask mask = BoundaryMask::none;
  bool output_bias = false;

  void validate() const {
    if (input_dim != 1 && input_dim != 2) throw ConfigError("input_dim must be 1 or 2");
    if (hidden_widths.empty()) throw ConfigError("hidden_widths must be nonempty");
    for (int w : hidden_widths)
      if (w <= 0) throw ConfigError("hidden widths must be positive");
    if (activation == Activation::sine && !(omega0 > 0.0)) throw ConfigError("omega0 must be positive");
    if (fourier && (fourier->features <= 0 || !(fourier->variance > 0.0)))
      throw ConfigError("fourier features need f > 0 and variance > 0");
    if (mask == BoundaryMask::sine && input_dim != 1) throw ConfigError("sin(pi x) mask needs input_dim 1");
    if (mask == BoundaryMask::sine_product && input_dim != 2)
      throw ConfigError("sin(pi x1) sin(pi x2) mask needs input_dim 2");
    if (output_bias) throw ConfigError("output-layer bias is not supported");
  }

  int feature_count() const { return fourier ? 2 * fourier->features : input_dim; }

  /// sum_i (w_{i-1} w_i + w_i) + w_last.
  std::size_t param_count() const {
    std::size_t count = 0;
    std::size_t prev = static_cast<std::size_t>(feature_count());
    for (int w : hidden_widths) {
      count += prev * w + w;
      prev = w;
    }
    return count + prev;
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::tanh, "tanh"}, {Activation::sine, "sine"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BoundaryMask, {{BoundaryMask::none, "none"},
                                            {BoundaryMask::sine, "sin"},
                                            {BoundaryMask::sine_product, "sin_sin"}})

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"input_dim", s.input_dim},   {"hidden_widths", s.hidden_widths},
                     {"activation", s.activation}, {"omega0", s.omega0},
                     {"boundary_mask", s.mask},    {"output_bias", s.output_bias}};
  if (s.fourier)
    j["fourier"] = {{"features", s.fourier->features}, {"variance", s.fourier->variance}};
  else
    j["fourier"] = nullptr;
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  try {
    s.input_dim = j.at("input_dim").get<int>();
    s.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
    s.activation = j.value("activation", Activation::tanh);
    s.omega0 = j.value("omega0", 1.0);
    s.mask = j.value("boundary_mask", BoundaryMask::none);
    if (j.contains("activation") && nlohmann::json(s.activation) != j.at("activation"))
      throw ConfigError("model spec: unknown activation " + j.at("activation").dump());
    if (j.contains("boundary_mask") && nlohmann::json(s.mask) != j.at("boundary_mask"))
      throw ConfigError("model spec: unknown boundary mask " + j.at("boundary_mask").dump());
    s.output_bias = j.value("output_bias", false);
    s.fourier.reset();
    if (j.contains("fourier") && !j.at("fourier").is_null())
      s.fourier = FourierFeatures{j.at("fourier").at("features").get<int>(), j.at("fourier").at("variance").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
}

/// [sin(2 pi B x), cos(2 pi B x)] for scalar x.
inline Vector fourier_embed(std::span<const double> frequencies, double x) {
  if (frequencies.empty()) throw ShapeError("fourier embedding needs at least one frequency");
  const std::size_t f = frequencies.size();
  Vector out(2 * f);
  for (std::size_t m = 0; m < f; ++m) {
    const double u = 2.0 * std::numbers::pi * frequencies[m] * x;
    out[m] = std::sin(u);
    out[f + m] = std::cos(u);
  }
  return out;
}

struct SpatialJet {
  double value = 0.0;
  Vector d1;
  Matrix d2;
};

class Model {
 public:
  const ModelSpec& spec() const noexcept { return spec_; }
  std::size_t param_count() const noexcept { return param_count_; }
  std::size_t basis_count() const noexcept { return static_cast<std::size_t>(spec_.hidden_widths.back()); }
  std::size_t outer_offset() const noexcept { return outer_offset_; }
  const ParamVector& initial() const noexcept { return initial_; }
  /// Frozen Fourier frequencies, features x input_dim; empty without a Fourier layer.
  const Matrix& frequencies() const noexcept { return frequencies_; }

  std::vector<std::size_t> outer_indices() const {
    std::vector<std::size_t> idx(basis_count());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = outer_offset_ + k;
    return idx;
  }

  ParamVector params(Vector values) const {
    if (values.size() != param_count_) throw ShapeError("parameter count does not match model");
    return ParamVector(std::move(values), outer_indices());
  }

  /// Masked basis functions at x as jets in D spatial directions (D = 0: values only).
  /// Only the inner block of theta is read.
  template <class T, int D>
  std::vector<Jet<T, D>> basis_jets(std::span<const T> theta, std::span<const double> x) const {
    check_shapes(theta.size(), x.size(), D);
    std::vector<Jet<T, D>> y = input_features<T, D>(x);
    std::vector<Jet<T, D>> next;
    for (const Layer& layer : layers_) {
      next.resize(layer.out);
      for (std::size_t j = 0; j < layer.out; ++j) {
        const std::span<const T> w = theta.subspan(layer.weights + j * layer.in, layer.in);
        const Jet<T, D> z = affine<T, D>(w, y, theta[layer.biases + j]);
        next[j] = spec_.activation == Activation::tanh ? tanh(z) : sin(scale(z, spec_.omega0));
      }
      std::swap(y, next);
    }
    if (spec_.mask != BoundaryMask::none) {
      const Jet<double, D> m = mask_jet<D>(x);
      for (auto& h : y) h = h * m;
    }
    return y;
  }

  template <class T, int D>
  Jet<T, D> output_jet(std::span<const T> theta, std::span<const double> x) const {
    const std::vector<Jet<T, D>> h = basis_jets<T, D>(theta, x);
    return affine<T, D>(theta.subspan(outer_offset_, basis_count()), h, T{});
  }

  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t weights;  // offset of the row-major out x in block
    std::size_t biases;
  };

  const std::vector<Layer>& layers() const noexcept { return layers_; }

  friend Model build(const ModelSpec& spec, std::uint64_t seed);

  /// Network inputs at x (coordinates or Fourier features) as constant jets.
  template <class T, int D>
  std::vector<Jet<T, D>> input_features(std::span<const double> x) const {
    std::vector<Jet<T, D>> y;
    if (!spec_.fourier) {
      for (int i = 0; i < spec_.input_dim; ++i) y.push_back(lift<T, D>(Jet<double, D>::coordinate(x[i], i)));
      return y;
    }
    const std::size_t f = frequencies_.rows();
    std::vector<Jet<double, D>> sines(f), cosines(f);
    for (std::size_t m = 0; m < f; ++m) {
      Jet<double, D> u;
      for (int i = 0; i < spec_.input_dim; ++i) {
        const double k = 2.0 * std::numbers::pi * frequencies_(m, i);
        u.value += k * x[i];
        if (i < D) u.d1[i] = k;
      }
      sines[m] = sin(u);
      const double s = std::sin(u.value);
      const double c = std::cos(u.value);
      cosines[m] = compose<double, D>(u, c, -s, -c);
    }
    for (const auto& s : sines) y.push_back(lift<T, D>(s));
    for (const auto& c : cosines) y.push_back(lift<T, D>(c));
    return y;
  }

  /// The boundary factor at x; only meaningful when the spec has a mask.
  template <int D>
  Jet<double, D> mask_jet(std::span<const double> x) const {
    auto factor = [&](int i) {
      Jet<double, D> u = Jet<double, D>::coordinate(x[i], i);
      return sin(scale(u, std::numbers::pi));
    };
    if (spec_.mask == BoundaryMask::sine) return factor(0);
    return factor(0) * factor(1);
  }

 private:
  void check_shapes(std::size_t n, std::size_t d, int jet_dim) const {
    if (n != param_count_) throw ShapeError("parameter count does not match model");
    if (d != static_cast<std::size_t>(spec_.input_dim)) throw ShapeError("input dimension does not match model");
    if (jet_dim != 0 && jet_dim != spec_.input_dim) throw ShapeError("jet dimension must equal input dimension");
  }

  template <class T, int D>
  static Jet<T, D> lift(const Jet<double, D>& j) {
    Jet<T, D> r;
    r.value = T(j.value);
    for (int i = 0; i < D; ++i) r.d1[i] = T(j.d1[i]);
    for (int s = 0; s < Jet<T, D>::kSecond; ++s) r.d2[s] = T(j.d2[s]);
    return r;
  }

  ModelSpec spec_;
  std::vector<Layer> layers_;
  std::size_t outer_offset_ = 0;
  std::size_t param_count_ = 0;
  Matrix frequencies_;
  ParamVector initial_;
};

/// Xavier-uniform weights, zero biases, frozen N(0, variance) Fourier frequencies.
inline Model build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.param_count_ = spec.param_count();

  std::mt19937_64 rng(seed);
  if (spec.fourier) {
    m.frequencies_ = Matrix(static_cast<std::size_t>(spec.fourier->features), static_cast<std::size_t>(spec.input_dim));
    std::normal_distribution<double> normal(0.0, std::sqrt(spec.fourier->variance));
    for (double& b : m.frequencies_.data()) b = normal(rng);
  }

  Vector theta(m.param_count_, 0.0);
  auto xavier = [&](std::size_t offset, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) theta[offset + i] = uniform(rng);
  };

  std::size_t offset = 0;
  std::size_t prev = static_cast<std::size_t>(spec.feature_count());
  for (int width : spec.hidden_widths) {
    const auto w = static_cast<std::size_t>(width);
    Model::Layer layer{prev, w, offset, offset + prev * w};
    xavier(layer.weights, prev, w);
    m.layers_.push_back(layer);
    offset = layer.biases + w;
    prev = w;
  }
  m.outer_offset_ = offset;
  xavier(offset, prev, 1);
  m.initial_ = m.params(std::move(theta));
  return m;
}

inline double forward(const Model& model, std::span<const double> theta, std::span<const double> x) {
  return model.output_jet<double, 0>(theta, x).value;
}

inline double forward(const Model& model, const ParamVector& theta, std::span<const double> x) {
  return forward(model, theta.values(), x);
}

/// Masked basis values h_k(x; theta^I).
inline Vector basis(const Model& model, std::span<const double> theta, std::span<const double> x) {
  const auto jets = model.basis_jets<double, 0>(theta, x);
  Vector out(jets.size());
  for (std::size_t k = 0; k < jets.size(); ++k) out[k] = jets[k].value;
  return out;
}

namespace detail {
template <int D>
SpatialJet to_spatial(const Jet<double, D>& j) {
  SpatialJet s{j.value, Vector(D), Matrix(D, D)};
  for (int i = 0; i < D; ++i) {
    s.d1[i] = j.d1[i];
    for (int k = 0; k < D; ++k) s.d2(i, k) = j.second(i, k);
  }
  return s;
}
}  // namespace detail

/// N, its spatial gradient, and its spatial Hessian at x.
inline SpatialJet spatial_jet(const Model& model, std::span<const double> theta, std::span<const double> x) {
  if (x.size() > 2) throw UnsupportedDimension("spatial jets support at most two dimensions");
  if (x.size() != static_cast<std::size_t>(model.spec().input_dim))
    throw ShapeError("input dimension does not match model");
  if (x.size() == 1) return detail::to_spatial<1>(model.output_jet<double, 1>(theta, x));
  return detail::to_spatial<2>(model.output_jet<double, 2>(theta, x));
}

}  // namespace newtonlab
