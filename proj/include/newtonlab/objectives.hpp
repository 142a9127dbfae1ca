#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "newtonlab/batch.hpp"
#include "newtonlab/diffgraph.hpp"
#include "newtonlab/errors.hpp"
#include "newtonlab/models.hpp"
#include "newtonlab/quadrature.hpp"

namespace newtonlab {

/// Scalar field on [0, 1]^d.
class TargetFunction {
 public:
  TargetFunction(int dim, std::function<double(std::span<const double>)> f, std::string label = "custom")
      : dim_(dim), f_(std::move(f)), label_(std::move(label)) {}

  /// amplitude * prod_i sin(pi_multiple * pi * x_i).
  static TargetFunction sine_product(int dim, double amplitude, double pi_multiple) {
    auto f = [=](std::span<const double> x) {
      double v = amplitude;
      for (double xi : x) v *= std::sin(pi_multiple * std::numbers::pi * xi);
      return v;
    };
    return TargetFunction(dim, f, "sine_product");
  }

  int dim() const noexcept { return dim_; }
  const std::string& label() const noexcept { return label_; }
  double operator()(std::span<const double> x) const { return f_(x); }

  Vector sample(const Grid& grid) const {
    Vector v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f_(grid.point(i));
    return v;
  }

 private:
  int dim_;
  std::function<double(std::span<const double>)> f_;
  std::string label_;
};

/// Scalar loss with exact value, gradient, and dense Hessian.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dimension() const = 0;
  virtual double value(std::span<const double> theta) const = 0;
  virtual double gradient(std::span<const double> theta, std::span<double> grad) const = 0;
  virtual DerivativeBundle derivatives(std::span<const double> theta) const = 0;
  /// Hessian before symmetrization; used to check the differentiation engine.
  virtual Matrix raw_hessian(std::span<const double> theta) const = 0;
};

/// Objective defined as sum_{i < terms} term(theta, i) where term is generic over double and ad::Var.
/// Terms that also carry a `batch` (BatchedLoss) use it for values and gradients.
template <class Terms>
class SumObjective final : public Objective {
 public:
  explicit SumObjective(Terms terms) : terms_(std::move(terms)) {}

  std::size_t dimension() const override { return terms_.dimension(); }

  double value(std::span<const double> theta) const override {
    if constexpr (kBatched) {
      if (terms_.batch) {
        check(theta);
        return terms_.batch->value(theta);
      }
    }
    return reference_value(theta);
  }

  double gradient(std::span<const double> theta, std::span<double> grad) const override {
    if constexpr (kBatched) {
      if (terms_.batch) {
        check(theta);
        return terms_.batch->gradient(theta, grad);
      }
    }
    return reference_gradient(theta, grad);
  }

  /// Term-by-term evaluation, bypassing any batched path.
  double reference_value(std::span<const double> theta) const {
    check(theta);
    double s = 0.0;
    for (std::size_t i = 0; i < terms_.count(); ++i) s += terms_.template term<double>(theta, i);
    return s;
  }

  /// Gradient from the tape, bypassing any batched path.
  double reference_gradient(std::span<const double> theta, std::span<double> grad) const {
    check(theta);
    return param_gradient(fn(), theta, grad, terms_.count());
  }

  DerivativeBundle derivatives(std::span<const double> theta) const override {
    check(theta);
    return param_derivs(fn(), theta, terms_.count());
  }

  Matrix raw_hessian(std::span<const double> theta) const override {
    check(theta);
    Vector g;
    Matrix h;
    DiffEngine::local().raw_derivatives(fn(), theta, terms_.count(), g, h);
    return h;
  }

  const Terms& terms() const noexcept { return terms_; }

 private:
  static constexpr bool kBatched = requires(const Terms& t) { t.batch; };

  auto fn() const {
    return [this](std::span<const ad::Var> theta, std::size_t i) { return terms_.template term<ad::Var>(theta, i); };
  }

  void check(std::span<const double> theta) const {
    if (theta.size() != terms_.dimension()) throw ShapeError("parameter count does not match objective");
  }

  Terms terms_;
};

template <class Terms>
std::shared_ptr<const Objective> make_objective(Terms terms) {
  return std::make_shared<SumObjective<Terms>>(std::move(terms));
}

// ---------------------------------------------------------------------------
// Manifold examples

/// 1/2 |(cos t, sin t) - target|^2 with target (2, 2).
struct CircleTerms {
  double target_x = 2.0;
  double target_y = 2.0;

  std::size_t dimension() const { return 1; }
  std::size_t count() const { return 1; }

  template <class T>
  T term(std::span<const T> theta, std::size_t) const {
    using std::cos;
    using std::sin;
    using ad::cos;
    using ad::sin;
    const T ex = cos(theta[0]) - target_x;
    const T ey = sin(theta[0]) - target_y;
    return (ex * ex + ey * ey) * 0.5;
  }
};

struct TorusSpec {
  double axis_radius = 1.0;   // R
  double tube_radius = 0.35;  // r
  double eccentricity = 1.2;  // e

  void validate() const {
    if (!(axis_radius > tube_radius && tube_radius > 0.0 && eccentricity > 0.0))
      throw ConfigError("torus needs R > r > 0 and e > 0");
  }
};

/// Point on the ellipsoidal torus for angles (t1, t2).
template <class T>
std::array<T, 3> torus_point(const TorusSpec& s, const T& t1, const T& t2) {
  using std::cos;
  using std::sin;
  using ad::cos;
  using ad::sin;
  const T ring = cos(t2) * s.tube_radius + s.axis_radius;
  return {ring * cos(t1), ring * sin(t1) * s.eccentricity, sin(t2) * s.tube_radius};
}

/// Squared distance of the torus point from the origin.
struct TorusTerms {
  TorusSpec spec;

  std::size_t dimension() const { return 2; }
  std::size_t count() const { return 1; }

  template <class T>
  T term(std::span<const T> theta, std::size_t) const {
    const auto p = torus_point<T>(spec, theta[0], theta[1]);
    return p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
  }
};

inline std::shared_ptr<const Objective> circle_loss() { return make_objective(CircleTerms{}); }

inline std::shared_ptr<const Objective> torus_loss(const TorusSpec& spec) {
  spec.validate();
  return make_objective(TorusTerms{spec});
}

// ---------------------------------------------------------------------------
// Network losses. Each is 1/2 * weight * sum_i residual_i^2 over the grid.

/// residual = N(x) - v(x)
struct RegressionTerms {
  std::shared_ptr<const Model> model;
  Grid grid;
  Vector target;  // v at the grid points
  std::shared_ptr<const BatchedLoss> batch;

  std::size_t dimension() const { return model->param_count(); }
  std::size_t count() const { return grid.size(); }

  template <class T>
  T term(std::span<const T> theta, std::size_t i) const {
    const T r = model->output_jet<T, 0>(theta, grid.point(i)).value - target[i];
    return r * r * (0.5 * grid.weight());
  }
};

/// residual = d^2 N / dx^2 + v(x)
struct Pinn1DTerms {
  std::shared_ptr<const Model> model;
  Grid grid;
  Vector forcing;
  std::shared_ptr<const BatchedLoss> batch;

  std::size_t dimension() const { return model->param_count(); }
  std::size_t count() const { return grid.size(); }

  template <class T>
  T term(std::span<const T> theta, std::size_t i) const {
    const auto n = model->output_jet<T, 1>(theta, grid.point(i));
    const T r = n.d2[0] + forcing[i];
    return r * r * (0.5 * grid.weight());
  }
};

/// residual = laplacian N + N + v(x)
struct Pinn2DTerms {
  std::shared_ptr<const Model> model;
  Grid grid;
  Vector forcing;
  std::shared_ptr<const BatchedLoss> batch;

  std::size_t dimension() const { return model->param_count(); }
  std::size_t count() const { return grid.size(); }

  template <class T>
  T term(std::span<const T> theta, std::size_t i) const {
    const auto n = model->output_jet<T, 2>(theta, grid.point(i));
    const T r = n.laplacian() + n.value + forcing[i];
    return r * r * (0.5 * grid.weight());
  }
};

inline std::shared_ptr<const Objective> regression_loss(std::shared_ptr<const Model> model, const TargetFunction& target,
                                                        const Grid& grid) {
  if (model->spec().input_dim != grid.dim() || target.dim() != grid.dim())
    throw ShapeError("regression: model, target, and grid dimensions differ");
  Vector v = target.sample(grid);
  auto batch = std::make_shared<const BatchedLoss>(model, grid, v, Residual::regression);
  return make_objective(RegressionTerms{std::move(model), grid, std::move(v), std::move(batch)});
}

inline std::shared_ptr<const Objective> pinn1d_loss(std::shared_ptr<const Model> model, const TargetFunction& forcing,
                                                    const Grid& grid) {
  if (model->spec().input_dim != 1 || grid.dim() != 1 || forcing.dim() != 1)
    throw ShapeError("pinn1d: needs a one-dimensional model, forcing, and grid");
  if (model->spec().mask == BoundaryMask::none) throw ConfigError("pinn1d: the model must carry a boundary mask");
  Vector v = forcing.sample(grid);
  auto batch = std::make_shared<const BatchedLoss>(model, grid, v, Residual::pinn1d);
  return make_objective(Pinn1DTerms{std::move(model), grid, std::move(v), std::move(batch)});
}

inline std::shared_ptr<const Objective> pinn2d_loss(std::shared_ptr<const Model> model, const TargetFunction& forcing,
                                                    const Grid& grid) {
  if (model->spec().input_dim != 2 || grid.dim() != 2 || forcing.dim() != 2)
    throw ShapeError("pinn2d: needs a two-dimensional model, forcing, and grid");
  if (model->spec().mask == BoundaryMask::none) throw ConfigError("pinn2d: the model must carry a boundary mask");
  Vector v = forcing.sample(grid);
  auto batch = std::make_shared<const BatchedLoss>(model, grid, v, Residual::pinn2d);
  return make_objective(Pinn2DTerms{std::move(model), grid, std::move(v), std::move(batch)});
}

}  // namespace newtonlab
