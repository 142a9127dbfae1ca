#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "newtonlab/errors.hpp"
#include "newtonlab/matrix.hpp"

namespace newtonlab {

/// Symmetric indefinite factorization P A P^T = L D L^T with Bunch-Kaufman
/// pivoting (1x1 and 2x2 diagonal blocks).
class LdltFactorization {
 public:
  explicit LdltFactorization(const SymmetricMatrix& a) : a_(a.matrix()), n_(a.size()), block_(n_, 1), swap_(n_) {
    factor();
  }

  Vector solve(std::span<const double> b) const {
    if (b.size() != n_) throw ShapeError("solve: right-hand side has wrong length");
    Vector x(b.begin(), b.end());
    for (std::size_t k = 0; k < n_; ++k) std::swap(x[k], x[swap_[k]]);
    // L z = y (unit lower; 2x2 blocks have L(k+1, k) = 0)
    for (std::size_t k = 0; k < n_; ++k)
      for (std::size_t i = k + (block_[k] == 2 ? 2 : 1); i < n_; ++i) x[i] -= a_(i, k) * x[k];
    for (std::size_t k = 0; k < n_;) {
      if (block_[k] == 1) {
        x[k] /= a_(k, k);
        ++k;
      } else {
        const double p = a_(k, k), q = a_(k + 1, k), r = a_(k + 1, k + 1);
        const double det = p * r - q * q;
        const double x0 = (r * x[k] - q * x[k + 1]) / det;
        const double x1 = (p * x[k + 1] - q * x[k]) / det;
        x[k] = x0;
        x[k + 1] = x1;
        k += 2;
      }
    }
    for (std::size_t k = n_; k-- > 0;)
      for (std::size_t i = k + (block_[k] == 2 ? 2 : 1); i < n_; ++i) x[k] -= a_(i, k) * x[i];
    for (std::size_t k = n_; k-- > 0;) std::swap(x[k], x[swap_[k]]);
    return x;
  }

 private:
  void symmetric_swap(std::size_t k, std::size_t p, std::size_t q) {
    // Rows p and q of the finished columns of L, then rows and columns of the trailing block.
    for (std::size_t j = 0; j < k; ++j) std::swap(a_(p, j), a_(q, j));
    for (std::size_t j = k; j < n_; ++j) std::swap(a_(p, j), a_(q, j));
    for (std::size_t i = k; i < n_; ++i) std::swap(a_(i, p), a_(i, q));
  }

  void factor() {
    const double alpha = (1.0 + std::sqrt(17.0)) / 8.0;
    const double tiny = static_cast<double>(n_) * std::numeric_limits<double>::epsilon() * std::max(a_.max_abs(), 1e-300);
    for (std::size_t k = 0; k < n_;) {
      std::size_t step = 1;
      const double absakk = std::abs(a_(k, k));
      std::size_t imax = k;
      double colmax = 0.0;
      for (std::size_t i = k + 1; i < n_; ++i)
        if (std::abs(a_(i, k)) > colmax) {
          colmax = std::abs(a_(i, k));
          imax = i;
        }
      if (std::max(absakk, colmax) <= tiny) throw SingularSystem("matrix is singular to working precision");

      std::size_t pivot = k;
      if (absakk < alpha * colmax) {
        double rowmax = 0.0;
        for (std::size_t j = k; j < n_; ++j)
          if (j != imax) rowmax = std::max(rowmax, std::abs(a_(imax, j)));
        if (absakk >= alpha * colmax * (colmax / rowmax)) {
          pivot = k;
        } else if (std::abs(a_(imax, imax)) >= alpha * rowmax) {
          pivot = imax;
        } else {
          pivot = imax;
          step = 2;
        }
      }
      const std::size_t kk = k + step - 1;
      if (pivot != kk) symmetric_swap(k, kk, pivot);
      swap_[kk] = pivot;
      if (step == 2) swap_[k] = k;

      if (step == 1) {
        const double d = a_(k, k);
        if (std::abs(d) <= tiny) throw SingularSystem("matrix is singular to working precision");
        for (std::size_t i = k + 1; i < n_; ++i) {
          const double lik = a_(i, k) / d;
          for (std::size_t j = k + 1; j <= i; ++j) a_(i, j) -= lik * a_(j, k);
        }
        for (std::size_t i = k + 1; i < n_; ++i) a_(i, k) /= d;
      } else {
        const double p = a_(k, k), q = a_(k + 1, k), r = a_(k + 1, k + 1);
        const double det = p * r - q * q;
        if (std::abs(det) <= tiny * std::abs(q)) throw SingularSystem("matrix is singular to working precision");
        for (std::size_t i = k + 2; i < n_; ++i) {
          const double w0 = a_(i, k), w1 = a_(i, k + 1);
          const double l0 = (r * w0 - q * w1) / det;
          const double l1 = (p * w1 - q * w0) / det;
          for (std::size_t j = k + 2; j <= i; ++j) a_(i, j) -= l0 * a_(j, k) + l1 * a_(j, k + 1);
        }
        for (std::size_t i = k + 2; i < n_; ++i) {
          const double w0 = a_(i, k), w1 = a_(i, k + 1);
          a_(i, k) = (r * w0 - q * w1) / det;
          a_(i, k + 1) = (p * w1 - q * w0) / det;
        }
        a_(k + 1, k) = q;  // keep the off-diagonal of D; solve() skips it in L
        block_[k] = 2;
        block_[k + 1] = 0;
      }
      // mirror the updated trailing lower triangle so later pivot searches and swaps see full storage
      for (std::size_t i = k + step; i < n_; ++i)
        for (std::size_t j = k + step; j < i; ++j) a_(j, i) = a_(i, j);
      k += step;
    }
  }

  Matrix a_;
  std::size_t n_;
  std::vector<int> block_;  // 1: 1x1 pivot, 2: first row of a 2x2 pivot, 0: second row
  std::vector<std::size_t> swap_;
};

/// Solves (A + shift I) x = b. Throws SingularSystem when the shifted matrix is
/// singular to working precision or the solve cannot reach a relative residual of 1e-8.
inline Vector solve_shifted(const SymmetricMatrix& a, double shift, std::span<const double> b) {
  const std::size_t n = a.size();
  if (b.size() != n) throw ShapeError("solve_shifted: right-hand side has wrong length");
  Matrix m = a.matrix();
  for (std::size_t i = 0; i < n; ++i) m(i, i) += shift;
  const SymmetricMatrix shifted(std::move(m));
  const LdltFactorization f(shifted);
  Vector x = f.solve(b);
  const double bnorm = norm2(b);
  auto residual = [&](const Vector& xs) {
    Vector r = shifted * xs;
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    return r;
  };
  Vector r = residual(x);
  if (!all_finite(x)) throw SingularSystem("solve produced non-finite values");
  if (norm2(r) >= 1e-8 * bnorm && bnorm > 0.0) {
    const Vector dx = f.solve(r);
    for (std::size_t i = 0; i < n; ++i) x[i] += dx[i];
    r = residual(x);
    if (!all_finite(x) || norm2(r) >= 1e-8 * bnorm) throw SingularSystem("shifted system is numerically singular");
  }
  return x;
}

struct EigenDecomposition {
  Vector eigenvalues;  // ascending
  Matrix eigenvectors;  // column j pairs with eigenvalues[j]
};

/// Full symmetric eigendecomposition: Householder tridiagonalization followed
/// by the implicit QL iteration.
inline EigenDecomposition sym_eig(const SymmetricMatrix& a) {
  const std::size_t n = a.size();
  if (n == 0) return {};
  Matrix v = a.matrix();
  Vector d(n), e(n);

  for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);
  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0, h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (std::size_t k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;

  // implicit QL
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  double f = 0.0, tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > 60) throw EigFailure("QL iteration did not converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;
        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = m; i-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (std::size_t k = 0; k < n; ++k) {
            h = v(k, i + 1);
            v(k, i + 1) = s * v(k, i) + c * h;
            v(k, i) = c * v(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return d[i] < d[j]; });
  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = d[order[j]];
    for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, j) = v(k, order[j]);
  }
  if (!all_finite(out.eigenvalues)) throw EigFailure("non-finite eigenvalues");
  return out;
}

enum class Definiteness { positive, negative, indefinite };

/// Sign pattern of the spectrum, decided by attempting Cholesky on A and -A.
inline Definiteness definiteness(const SymmetricMatrix& a) {
  const std::size_t n = a.size();
  auto cholesky_ok = [&](double sign) {
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = sign * a(j, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
      if (!(s > 0.0)) return false;
      l(j, j) = std::sqrt(s);
      for (std::size_t i = j + 1; i < n; ++i) {
        double t = sign * a(i, j);
        for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
        l(i, j) = t / l(j, j);
      }
    }
    return true;
  };
  if (cholesky_ok(1.0)) return Definiteness::positive;
  if (cholesky_ok(-1.0)) return Definiteness::negative;
  return Definiteness::indefinite;
}

/// (M + M^T) / 2 with M_ij iid N(0, scale^2); the draw for `trial` depends only on (seed, trial).
inline SymmetricMatrix random_symmetric(std::size_t n, std::uint64_t seed, std::uint64_t trial, double scale = 1.0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(n, n);
  for (double& x : m.data()) x = scale * normal(rng);
  return SymmetricMatrix(std::move(m));
}

struct CensusResult {
  std::size_t definite_positive = 0;
  std::size_t definite_negative = 0;
  std::size_t indefinite = 0;

  bool operator==(const CensusResult&) const = default;
};

inline CensusResult random_hessian_census(std::size_t n, std::size_t trials, std::uint64_t seed, double scale = 1.0) {
  if (n < 1 || trials < 1) throw ConfigError("census needs n >= 1 and trials >= 1");
  CensusResult r;
  for (std::size_t t = 0; t < trials; ++t) {
    switch (definiteness(random_symmetric(n, seed, t, scale))) {
      case Definiteness::positive: ++r.definite_positive; break;
      case Definiteness::negative: ++r.definite_negative; break;
      case Definiteness::indefinite: ++r.indefinite; break;
    }
  }
  return r;
}

}  // namespace newtonlab
