#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "newtonlab/diagnostics.hpp"
#include "support.hpp"

using namespace newtonlab;
namespace ts = testing_support;

namespace {

constexpr double kPi = std::numbers::pi;

Vector sample(const Grid& grid, double (*f)(double)) {
  Vector out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = f(grid.point(i)[0]);
  return out;
}

}  // namespace

TEST(Classify, Examples) {
  EXPECT_EQ(classify(Vector{3.7, 0.7}, 1e-6), Classification::minimum);
  EXPECT_EQ(classify(Vector{1.6, -0.7}, 1e-6), Classification::saddle);
  EXPECT_EQ(classify(Vector{-1.6, -1.1}, 1e-6), Classification::maximum);
  EXPECT_EQ(classify(Vector{-1e-9, 1e-9}, 1e-6), Classification::degenerate);
  EXPECT_EQ(classify(Vector{2.0, 1e-9}, 1e-6), Classification::degenerate);
  EXPECT_DOUBLE_EQ(default_zero_tol(Vector{0.1, -0.2}), 1e-6);
  EXPECT_DOUBLE_EQ(default_zero_tol(Vector{-300.0, 2.0}), 3e-4);
}

TEST(Classify, InvariantUnderPositiveScaling) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> c(1e-3, 1e3);
  for (int k = 0; k < 200; ++k) {
    Vector ev(1 + k % 5);
    for (double& l : ev) l = g(rng) * (k % 3 == 0 ? 1e-7 : 1.0);
    const double s = c(rng);
    Vector scaled = ev;
    for (double& l : scaled) l *= s;
    EXPECT_EQ(classify(ev, 1e-6), classify(scaled, 1e-6 * s));
  }
}

TEST(Analyze, CircleStationaryPoints) {
  const auto f = circle_loss();
  EXPECT_EQ(analyze(*f, Vector{kPi / 4}).classification, Classification::minimum);
  const auto r = analyze(*f, Vector{5 * kPi / 4});
  EXPECT_EQ(r.classification, Classification::maximum);
  EXPECT_EQ(r.count_negative(), 1u);
  EXPECT_LT(r.grad_norm, 1e-14);
}

TEST(Orthogonality, SelfAndOrthogonalFunctions) {
  const Grid grid(200, 1);
  const Vector v = sample(grid, [](double x) { return std::sin(4 * kPi * x); });
  const auto o = grid_cosines(grid, v, {v, Vector(grid.size(), 1.0), sample(grid, [](double x) {
                                          return std::sin(kPi * x) + 0.3;
                                        })});
  EXPECT_NEAR(*o[0], 1.0, 1e-10);
  EXPECT_NEAR(*o[1], 0.0, 2e-3);
  EXPECT_NEAR(*o[2], 0.0, 2e-3);
  const auto z = grid_cosines(grid, v, {Vector(grid.size(), 0.0)});
  EXPECT_FALSE(z[0].has_value());
}

TEST(Orthogonality, RegressionOfSingleNeuronAgainstItself) {
  ModelSpec s;
  s.input_dim = 1;
  s.hidden_widths = {1};
  const Model m = build(s, 0);
  const Grid grid(100, 1);
  const Vector theta{2.0, -0.5, 1.0};
  const auto o = orthogonality_regression(
      m, theta, TargetFunction(1, [](std::span<const double> x) { return 3.0 * std::tanh(2.0 * x[0] - 0.5); }), grid);
  EXPECT_NEAR(*o[0], 1.0, 1e-10);
}

TEST(Orthogonality, OperatorImageAgainstHighResolutionOracle) {
  // Masked basis sin(pi x) sin(2 pi x); its second derivative against sin(4 pi x).
  // Reference cosine from adaptive quadrature of the continuous integrals.
  const double oracle = 0.685620594512198;
  ModelSpec s;
  s.input_dim = 1;
  s.hidden_widths = {1};
  s.activation = Activation::sine;
  s.omega0 = 2 * kPi;
  s.mask = BoundaryMask::sine;
  const Model m = build(s, 0);
  const auto forcing = TargetFunction::sine_product(1, 100.0, 4.0);
  const auto o = orthogonality_pinn(m, Vector{1.0, 0.0, 1.0}, forcing, Grid(10000, 1), PinnMode::pinn1d);
  EXPECT_NEAR(*o[0], oracle, 1e-6);
  const auto coarse = orthogonality_pinn(m, Vector{1.0, 0.0, 1.0}, forcing, Grid(100, 1), PinnMode::pinn1d);
  EXPECT_NEAR(*coarse[0], oracle, 1e-3);
}

TEST(Orthogonality, ProportionalOperatorImage) {
  const Grid grid(100, 1);
  const Vector v = sample(grid, [](double x) { return std::sin(4 * kPi * x); });
  Vector image = v;
  for (double& y : image) y *= -16 * kPi * kPi;
  EXPECT_NEAR(std::abs(*grid_cosines(grid, v, {image})[0]), 1.0, 1e-12);
}

TEST(Orthogonality, TwoDimensionalFourierModesAreOrthogonal) {
  ModelSpec s;
  s.input_dim = 2;
  s.hidden_widths = {1};
  s.activation = Activation::sine;
  s.omega0 = 1.0;
  s.mask = BoundaryMask::sine_product;
  const Model m = build(s, 0);
  const Vector theta{0.0, 0.0, kPi / 2, 1.0};  // basis = sin(pi x1) sin(pi x2)
  const auto o = orthogonality_pinn(m, theta, TargetFunction::sine_product(2, 100.0, 4.0), Grid(50, 2), PinnMode::pinn2d);
  EXPECT_NEAR(*o[0], 0.0, 1e-10);
  EXPECT_THROW(orthogonality_pinn(m, theta, TargetFunction::sine_product(1, 1.0, 4.0), Grid(50, 1), PinnMode::pinn1d),
               ShapeError);
}

TEST(Orthogonality, BoundedByOneOnRandomNetworks) {
  for (const ModelSpec& spec : {ts::mlp_spec(), ts::fourier_spec(), ts::pinn1d_spec()}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Model m = build(spec, seed);
      const Vector theta = ts::perturbed(m.initial(), 0.5, seed + 10);
      const Grid grid(100, 1);
      const auto target = TargetFunction::sine_product(1, 2.0, 4.0);
      EXPECT_LE(max_abs_orthogonality(orthogonality_regression(m, theta, target, grid)), 1.0 + 1e-6);
      if (spec.mask != BoundaryMask::none)
        EXPECT_LE(max_abs_orthogonality(orthogonality_pinn(m, theta, target, grid, PinnMode::pinn1d)), 1.0 + 1e-6);
    }
  }
}

TEST(DetectTrivial, Examples) {
  const Model m = build(ts::mlp_spec(), 0);
  const Grid grid(100, 1);
  Vector theta(m.initial().values().begin(), m.initial().values().end());
  for (auto j : m.outer_indices()) theta[j] = 0.0;
  EXPECT_TRUE(detect_trivial(m.params(theta), m, grid, 1e-12));
  for (auto j : m.outer_indices()) theta[j] = 1e-9;
  EXPECT_TRUE(detect_trivial(m.params(theta), m, grid, 1e-6));
  EXPECT_FALSE(detect_trivial(m.initial(), m, grid, 1e-3));
}
