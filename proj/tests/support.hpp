#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "newtonlab/models.hpp"
#include "newtonlab/objectives.hpp"

namespace testing_support {

using newtonlab::Matrix;
using newtonlab::Objective;
using newtonlab::Vector;

inline Vector fd_gradient(const Objective& f, const Vector& theta, double h = 1e-5) {
  Vector g(theta.size());
  Vector t = theta;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    t[j] = theta[j] + h;
    const double up = f.value(t);
    t[j] = theta[j] - h;
    const double down = f.value(t);
    t[j] = theta[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central difference of the exact gradient along v.
inline Vector fd_hvp(const Objective& f, const Vector& theta, const Vector& v, double h = 1e-5) {
  Vector tp = theta, tm = theta;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    tp[j] += h * v[j];
    tm[j] -= h * v[j];
  }
  Vector gp(theta.size()), gm(theta.size());
  f.gradient(tp, gp);
  f.gradient(tm, gm);
  Vector out(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) out[j] = (gp[j] - gm[j]) / (2.0 * h);
  return out;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double rel_error(const Vector& a, const Vector& b, double floor = 1e-12) {
  double err = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return err / scale;
}

inline Vector perturbed(const newtonlab::ParamVector& theta, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Vector out(theta.values().begin(), theta.values().end());
  for (double& v : out) v += n(rng);
  return out;
}

inline newtonlab::ModelSpec mlp_spec() {
  newtonlab::ModelSpec s;
  s.input_dim = 1;
  s.hidden_widths = {10, 10};
  return s;
}

inline newtonlab::ModelSpec siren_spec(double omega0 = 4.0) {
  auto s = mlp_spec();
  s.activation = newtonlab::Activation::sine;
  s.omega0 = omega0;
  return s;
}

inline newtonlab::ModelSpec fourier_spec() {
  auto s = mlp_spec();
  s.fourier = newtonlab::FourierFeatures{10, 1.5};
  return s;
}

inline newtonlab::ModelSpec pinn1d_spec() {
  auto s = siren_spec(4.0);
  s.mask = newtonlab::BoundaryMask::sine;
  return s;
}

inline newtonlab::ModelSpec pinn2d_spec() {
  newtonlab::ModelSpec s;
  s.input_dim = 2;
  s.hidden_widths = {10, 10};
  s.activation = newtonlab::Activation::sine;
  s.omega0 = 5.0;
  s.mask = newtonlab::BoundaryMask::sine_product;
  return s;
}

inline std::shared_ptr<const newtonlab::Model> make_model(const newtonlab::ModelSpec& s, std::uint64_t seed) {
  return std::make_shared<const newtonlab::Model>(newtonlab::build(s, seed));
}

}  // namespace testing_support
