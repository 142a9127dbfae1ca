#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "newtonlab/linalg.hpp"

using namespace newtonlab;

namespace {

SymmetricMatrix from_rows(std::size_t n, std::initializer_list<double> values) {
  Matrix m(n, n);
  std::copy(values.begin(), values.end(), m.data().begin());
  return SymmetricMatrix(std::move(m));
}

SymmetricMatrix random_spd(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix b(n, n);
  for (double& x : b.data()) x = g(rng);
  Matrix a = b.transposed() * b;
  for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
  return SymmetricMatrix(std::move(a));
}

double residual_ratio(const SymmetricMatrix& a, double shift, const Vector& x, const Vector& b) {
  Vector r = a * x;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += shift * x[i] - b[i];
  return norm2(r) / norm2(b);
}

}  // namespace

TEST(SolveShifted, DiagonalExamples) {
  const Vector x = solve_shifted(from_rows(2, {2, 0, 0, 2}), 0.0, Vector{2, 4});
  EXPECT_NEAR(x[0], 1.0, 1e-15);
  EXPECT_NEAR(x[1], 2.0, 1e-15);
  const Vector y = solve_shifted(from_rows(2, {1, 0, 0, -1}), 0.5, Vector{1, 1});
  EXPECT_NEAR(y[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y[1], -2.0, 1e-15);
}

TEST(SolveShifted, RandomSpdResidual) {
  const SymmetricMatrix a = random_spd(50, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector b(50);
  for (double& v : b) v = g(rng);
  const Vector x = solve_shifted(a, 0.0, b);
  EXPECT_LT(residual_ratio(a, 0.0, x, b), 1e-10);
}

TEST(SolveShifted, IndefiniteSystems) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SymmetricMatrix a = random_symmetric(60, seed, 0);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> g(0.0, 1.0);
    Vector b(60);
    for (double& v : b) v = g(rng);
    const Vector x = solve_shifted(a, 0.1, b);
    EXPECT_LT(residual_ratio(a, 0.1, x, b), 1e-10);
  }
}

TEST(SolveShifted, SingularAndShapeErrors) {
  EXPECT_THROW(solve_shifted(from_rows(2, {1, 0, 0, -1}), 1.0, Vector{1, 1}), SingularSystem);
  EXPECT_THROW(solve_shifted(from_rows(2, {1, 1, 1, 1}), 0.0, Vector{1, 0}), SingularSystem);
  EXPECT_THROW(solve_shifted(from_rows(2, {1, 0, 0, 1}), 0.0, Vector{1, 0, 0}), ShapeError);
}

TEST(SymEig, SwapMatrix) {
  const auto e = sym_eig(from_rows(2, {0, 1, 1, 0}));
  EXPECT_NEAR(e.eigenvalues[0], -1.0, 1e-15);
  EXPECT_NEAR(e.eigenvalues[1], 1.0, 1e-15);
  const double s = 1.0 / std::numbers::sqrt2;
  EXPECT_NEAR(std::abs(e.eigenvectors(0, 0)), s, 1e-15);
  EXPECT_NEAR(e.eigenvectors(0, 0) * e.eigenvectors(1, 0), -0.5, 1e-15);
  EXPECT_NEAR(e.eigenvectors(0, 1) * e.eigenvectors(1, 1), 0.5, 1e-15);
}

TEST(SymEig, DiagonalAndOneByOne) {
  const auto e = sym_eig(from_rows(3, {3, 0, 0, 0, -2, 0, 0, 0, 1}));
  EXPECT_EQ(e.eigenvalues, (Vector{-2, 1, 3}));
  const auto f = sym_eig(from_rows(1, {-4}));
  EXPECT_EQ(f.eigenvalues, (Vector{-4}));
}

TEST(SymEig, ResidualOrthonormalityAndEigenOracle) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const std::size_t n = 140;
    const SymmetricMatrix a = random_symmetric(n, seed, 7);
    const auto e = sym_eig(a);
    const double anorm = a.matrix().norm_inf();
    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t j = 0; j < n; ++j) {
      Vector v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = e.eigenvectors(i, j);
      Vector r = a * v;
      for (std::size_t i = 0; i < n; ++i) r[i] -= e.eigenvalues[j] * v[i];
      EXPECT_LT(norm2(r), 100.0 * n * eps * anorm);
    }
    const Matrix vtv = e.eigenvectors.transposed() * e.eigenvectors;
    EXPECT_LT((vtv - Matrix::identity(n)).max_abs(), 100.0 * n * eps);

    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) = a(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(m, Eigen::EigenvaluesOnly);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(e.eigenvalues[j], oracle.eigenvalues()[j], 1e-10 * anorm);
  }
}

TEST(SymEig, RejectsNonFinite) {
  EXPECT_THROW(sym_eig(from_rows(2, {std::numeric_limits<double>::quiet_NaN(), 0, 0, 1})), EigFailure);
}

TEST(Definiteness, AgreesWithSpectrumSigns) {
  for (std::size_t n : {1u, 2u, 3u, 5u}) {
    for (std::uint64_t t = 0; t < 300; ++t) {
      const SymmetricMatrix a = random_symmetric(n, 99, t);
      const auto ev = sym_eig(a).eigenvalues;
      const Definiteness expected = ev.front() > 0.0 ? Definiteness::positive
                                    : ev.back() < 0.0 ? Definiteness::negative
                                                      : Definiteness::indefinite;
      EXPECT_EQ(definiteness(a), expected) << "n " << n << " trial " << t;
    }
  }
}

TEST(Census, ScalarSignIsAFairCoin) {
  const auto r = random_hessian_census(1, 10000, 5);
  EXPECT_EQ(r.indefinite, 0u);
  EXPECT_EQ(r.definite_positive + r.definite_negative, 10000u);
  EXPECT_NEAR(static_cast<double>(r.definite_positive), 5000.0, 150.0);
}

TEST(Census, TwoByTwoMatchesAnalyticFraction) {
  // P(definite) = 2 int_{a,c>0} phi(a) phi(c) erf(sqrt(ac)) = 1 - 1/sqrt(2)
  const double oracle = 0.29289321881345248;
  const std::size_t trials = 200000;
  const auto r = random_hessian_census(2, trials, 6);
  const double fraction = static_cast<double>(r.definite_positive + r.definite_negative) / trials;
  EXPECT_NEAR(fraction, oracle, 0.005);
  EXPECT_NEAR(static_cast<double>(r.definite_positive), static_cast<double>(r.definite_negative), 0.01 * trials);
}

TEST(Census, LargeMatricesAreIndefinite) {
  const auto r = random_hessian_census(140, 200, 8);
  EXPECT_EQ(r.definite_positive, 0u);
  EXPECT_EQ(r.definite_negative, 0u);
}

TEST(Census, DeterministicAndScaleInvariant) {
  EXPECT_EQ(random_hessian_census(3, 2000, 9), random_hessian_census(3, 2000, 9));
  EXPECT_EQ(random_hessian_census(3, 2000, 9), random_hessian_census(3, 2000, 9, 7.5));
  EXPECT_THROW(random_hessian_census(0, 10, 1), ConfigError);
}
