#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "newtonlab/diffgraph.hpp"
#include "newtonlab/objectives.hpp"
#include "support.hpp"

using namespace newtonlab;
using testing_support::fd_gradient;
using testing_support::fd_hvp;
using testing_support::rel_error;

namespace {

struct Quadratic {
  template <class T>
  T operator()(std::span<const T> th, std::size_t) const {
    return th[0] * th[0] + th[1] * th[1];
  }
};

// A scalar function exercising every taped operation.
template <class T>
T kitchen_sink(std::span<const T> x) {
  using std::cos;
  using std::exp;
  using std::sin;
  using std::sqrt;
  using std::tanh;
  using ad::cos;
  using ad::exp;
  using ad::sin;
  using ad::sqrt;
  using ad::tanh;
  using ad::square;
  const T a = sin(x[0]) * cos(x[1]) + tanh(x[2] * x[0]);
  const T b = exp(x[1] * 0.3) / (x[2] * x[2] + 1.5);
  const T c = sqrt(x[0] * x[0] + 2.0) - square(x[2] - x[1]);
  const T d = 1.0 / (a + 3.0) - b * c + (2.0 - x[0]) * x[1];
  return d * d + a;
}

}  // namespace

TEST(ParamVector, PartitionIsComplementary) {
  ParamVector p({1, 2, 3, 4, 5}, {4, 1});
  EXPECT_EQ(p.outer_indices(), (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(p.inner_indices(), (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_EQ(p.outer_values(), (Vector{2, 5}));
  EXPECT_EQ(p.inner_values(), (Vector{1, 3, 4}));
}

TEST(ParamVector, RejectsBadIndices) {
  EXPECT_THROW(ParamVector({}, {}), ShapeError);
  EXPECT_THROW(ParamVector({1, 2}, {2}), ShapeError);
  EXPECT_THROW(ParamVector({1, 2}, {1, 1}), ShapeError);
}

TEST(ParamDerivs, SumOfSquares) {
  const Vector theta{1.0, 2.0};
  const auto b = param_derivs(Quadratic{}, theta);
  EXPECT_DOUBLE_EQ(b.value, 5.0);
  EXPECT_DOUBLE_EQ(b.gradient[0], 2.0);
  EXPECT_DOUBLE_EQ(b.gradient[1], 4.0);
  EXPECT_DOUBLE_EQ(b.hessian(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(b.hessian(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(b.hessian(0, 1), 0.0);
}

TEST(ParamDerivs, CircleAtQuarterPi) {
  const auto f = circle_loss();
  const Vector theta{std::numbers::pi / 4};
  const auto b = f->derivatives(theta);
  EXPECT_NEAR(b.gradient[0], 0.0, 1e-14);
  EXPECT_NEAR(b.hessian(0, 0), 2.0 * std::numbers::sqrt2, 1e-12);
}

TEST(ParamDerivs, AllOperationsMatchFiniteDifferences) {
  const auto term = [](std::span<const ad::Var> x, std::size_t) { return kitchen_sink<ad::Var>(x); };
  struct Fn final : Objective {
    std::size_t dimension() const override { return 3; }
    double value(std::span<const double> t) const override { return kitchen_sink<double>(t); }
    double gradient(std::span<const double> t, std::span<double> g) const override {
      return param_gradient([](std::span<const ad::Var> x, std::size_t) { return kitchen_sink<ad::Var>(x); }, t, g);
    }
    DerivativeBundle derivatives(std::span<const double>) const override { return {}; }
    Matrix raw_hessian(std::span<const double>) const override { return {}; }
  } fn;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int draw = 0; draw < 20; ++draw) {
    const Vector x{u(rng), u(rng), u(rng)};
    const auto b = param_derivs(term, x);
    EXPECT_NEAR(b.value, kitchen_sink<double>(x), 1e-13);
    EXPECT_LT(rel_error(b.gradient, fd_gradient(fn, x)), 1e-8);
    for (std::size_t j = 0; j < 3; ++j) {
      Vector e(3, 0.0);
      e[j] = 1.0;
      const Vector col = fd_hvp(fn, x, e);
      Vector exact(3);
      for (std::size_t i = 0; i < 3; ++i) exact[i] = b.hessian(i, j);
      EXPECT_LT(rel_error(exact, col), 1e-7);
    }
  }
}

TEST(ParamDerivs, ConstantsFoldWithoutTape) {
  const auto term = [](std::span<const ad::Var> th, std::size_t) { return ad::Var(3.0) * 2.0 + th[0] * 0.0; };
  const auto b = param_derivs(term, Vector{1.0});
  EXPECT_DOUBLE_EQ(b.value, 6.0);
  EXPECT_DOUBLE_EQ(b.gradient[0], 0.0);
  EXPECT_DOUBLE_EQ(b.hessian(0, 0), 0.0);
}

TEST(ParamDerivs, SumOverTermsAddsUp) {
  const auto term = [](std::span<const ad::Var> th, std::size_t i) {
    return th[0] * th[1] * static_cast<double>(i + 1);
  };
  const auto b = param_derivs(term, Vector{2.0, 3.0}, 4);  // (1+2+3+4) * t0 t1
  EXPECT_DOUBLE_EQ(b.value, 60.0);
  EXPECT_DOUBLE_EQ(b.gradient[0], 30.0);
  EXPECT_DOUBLE_EQ(b.gradient[1], 20.0);
  EXPECT_DOUBLE_EQ(b.hessian(0, 1), 10.0);
  EXPECT_DOUBLE_EQ(b.hessian(0, 0), 0.0);
}

TEST(ParamDerivs, NonFiniteNamesTheParameter) {
  const auto term = [](std::span<const ad::Var> th, std::size_t) { return th[0] + ad::sqrt(th[1]); };
  try {
    param_derivs(term, Vector{1.0, 0.0});
    FAIL() << "expected NonFiniteDerivative";
  } catch (const NonFiniteDerivative& e) {
    EXPECT_EQ(e.parameter(), 1u);
  }
  const auto overflow = [](std::span<const ad::Var> th, std::size_t) { return ad::exp(th[0]); };
  EXPECT_THROW(param_derivs(overflow, Vector{1000.0}), NonFiniteDerivative);
}

TEST(ParamDerivs, TapeIsRequiredOutsideScope) {
  const ad::Var a = ad::Var::node(1.0, 0);
  EXPECT_THROW(ad::sin(a), std::logic_error);
}

TEST(Jets, SineOfScaledCoordinate) {
  // N(x) = sin(pi x) at x = 0.5 -> (1, 0, -pi^2)
  const auto u = Jet<double, 1>::coordinate(0.5, 0);
  const auto n = sin(scale(u, std::numbers::pi));
  EXPECT_NEAR(n.value, 1.0, 1e-15);
  EXPECT_NEAR(n.d1[0], 0.0, 1e-15);
  EXPECT_NEAR(n.d2[0], -std::numbers::pi * std::numbers::pi, 1e-12);
}

TEST(Jets, ProductOfSinesLaplacian) {
  const auto x = Jet<double, 2>::coordinate(0.5, 0);
  const auto y = Jet<double, 2>::coordinate(0.5, 1);
  const auto n = sin(scale(x, std::numbers::pi)) * sin(scale(y, std::numbers::pi));
  EXPECT_NEAR(n.value, 1.0, 1e-15);
  EXPECT_NEAR(n.laplacian(), -2.0 * std::numbers::pi * std::numbers::pi, 1e-12);
}

TEST(Jets, AnalyticExpressionsAtRandomPoints) {
  // f(x, y) = tanh(2x - y) * sin(3y + x)
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double x = u(rng), y = u(rng);
    const auto jx = Jet<double, 2>::coordinate(x, 0);
    const auto jy = Jet<double, 2>::coordinate(y, 1);
    const auto f = tanh(scale(jx, 2.0) + scale(jy, -1.0)) * sin(scale(jy, 3.0) + jx);
    const double a = 2 * x - y, b = 3 * y + x;
    const double t = std::tanh(a), d = 1 - t * t, dd = -2 * t * d;
    const double s = std::sin(b), c = std::cos(b);
    EXPECT_NEAR(f.value, t * s, 1e-14);
    EXPECT_NEAR(f.d1[0], 2 * d * s + t * c, 1e-12);
    EXPECT_NEAR(f.d1[1], -d * s + 3 * t * c, 1e-12);
    EXPECT_NEAR(f.second(0, 0), 4 * dd * s + 2 * 2 * d * c - t * s, 1e-10);
    EXPECT_NEAR(f.second(1, 1), dd * s - 2 * 3 * d * c - 9 * t * s, 1e-10);
    EXPECT_NEAR(f.second(0, 1), -2 * dd * s + 2 * 3 * d * c - d * c - 3 * t * s, 1e-10);
  }
}

TEST(Jets, ParameterDerivativeOfSpatialSecondDerivative) {
  // d/dw of d^2/dx^2 sin(w x) = d/dw (-w^2 sin(w x)) = -2w sin(wx) - w^2 x cos(wx)
  const double w = 1.7, x = 0.4;
  const auto term = [&](std::span<const ad::Var> th, std::size_t) {
    const auto u = Jet<ad::Var, 1>::coordinate(x, 0);
    return sin(scale(u, th[0])).d2[0];
  };
  const auto b = param_derivs(term, Vector{w});
  EXPECT_NEAR(b.value, -w * w * std::sin(w * x), 1e-13);
  EXPECT_NEAR(b.gradient[0], -2 * w * std::sin(w * x) - w * w * x * std::cos(w * x), 1e-12);
}

TEST(Hessian, SymmetricBeforeAndAfterSymmetrization) {
  const auto model = testing_support::make_model(testing_support::pinn1d_spec(), 3);
  const auto f = pinn1d_loss(model, TargetFunction::sine_product(1, 100.0, 4.0), Grid(40, 1));
  const Vector theta = testing_support::perturbed(model->initial(), 0.2, 9);
  const Matrix raw = f->raw_hessian(theta);
  const auto b = f->derivatives(theta);
  const double scale = raw.max_abs();
  double asym = 0.0;
  for (std::size_t i = 0; i < raw.rows(); ++i)
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      asym = std::max(asym, std::abs(raw(i, j) - raw(j, i)));
      EXPECT_EQ(b.hessian(i, j), b.hessian(j, i));
    }
  EXPECT_LT(asym, 1e-8 * scale);
}

TEST(Hessian, TwoEnginesOnTwoThreadsAgree) {
  const auto model = testing_support::make_model(testing_support::mlp_spec(), 4);
  const auto f = regression_loss(model, TargetFunction::sine_product(1, 2.0, 4.0), Grid(30, 1));
  const Vector theta(model->initial().values().begin(), model->initial().values().end());
  DerivativeBundle a, b;
  std::thread t1([&] { a = f->derivatives(theta); });
  std::thread t2([&] { b = f->derivatives(theta); });
  t1.join();
  t2.join();
  EXPECT_EQ(a.gradient, b.gradient);
  for (std::size_t i = 0; i < theta.size(); ++i)
    for (std::size_t j = 0; j < theta.size(); ++j) ASSERT_EQ(a.hessian(i, j), b.hessian(i, j));
}
