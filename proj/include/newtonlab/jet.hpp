#pragma once

// Second-order truncated Taylor expansion in D spatial variables.
//
// The coefficient type T is either double or ad::Var, so a jet built from
// Var coefficients stays differentiable with respect to the parameters.

#include <array>
#include <cmath>
#include <span>

#include "newtonlab/tape.hpp"

namespace newtonlab {

template <class T, int D>
struct Jet {
  static_assert(D >= 0 && D <= 2, "jets track at most two spatial directions");
  static constexpr int kSecond = D * (D + 1) / 2;

  T value{};
  std::array<T, D> d1{};
  std::array<T, kSecond> d2{};  // upper triangle, row-major

  static constexpr int slot(int i, int j) {
    if (i > j) return slot(j, i);
    return i * D - i * (i - 1) / 2 + (j - i);
  }

  const T& second(int i, int j) const { return d2[slot(i, j)]; }

  T laplacian() const {
    T s{};
    for (int i = 0; i < D; ++i) s = s + d2[slot(i, i)];
    return s;
  }

  static Jet constant(T v) {
    Jet j;
    j.value = v;
    return j;
  }

  /// The coordinate function x_i.
  static Jet coordinate(double x, int i) {
    Jet j;
    j.value = T(x);
    if (i < D) j.d1[i] = T(1.0);
    return j;
  }
};

/// Composes a univariate function f with derivative values f1 = f', f2 = f'' at u.value.
template <class T, int D>
Jet<T, D> compose(const Jet<T, D>& u, T f, T f1, T f2) {
  Jet<T, D> r;
  r.value = f;
  for (int i = 0; i < D; ++i) r.d1[i] = f1 * u.d1[i];
  for (int i = 0; i < D; ++i)
    for (int k = i; k < D; ++k) {
      const int s = Jet<T, D>::slot(i, k);
      r.d2[s] = f1 * u.d2[s] + f2 * (u.d1[i] * u.d1[k]);
    }
  return r;
}

template <class T, int D>
Jet<T, D> sin(const Jet<T, D>& u) {
  using std::cos;
  using std::sin;
  using ad::cos;
  using ad::sin;
  const T s = sin(u.value);
  const T c = cos(u.value);
  return compose(u, s, c, T(-1.0) * s);
}

template <class T, int D>
Jet<T, D> tanh(const Jet<T, D>& u) {
  using std::tanh;
  using ad::tanh;
  const T t = tanh(u.value);
  const T d = T(1.0) - t * t;
  return compose(u, t, d, T(-2.0) * t * d);
}

template <class T, class S, int D>
Jet<T, D> scale(const Jet<T, D>& u, S c) {
  Jet<T, D> r;
  r.value = u.value * c;
  for (int i = 0; i < D; ++i) r.d1[i] = u.d1[i] * c;
  for (int s = 0; s < Jet<T, D>::kSecond; ++s) r.d2[s] = u.d2[s] * c;
  return r;
}

/// Product rule; S may be double to multiply a differentiable jet by a fixed one.
template <class T, class S, int D>
Jet<T, D> operator*(const Jet<T, D>& a, const Jet<S, D>& b) {
  Jet<T, D> r;
  r.value = a.value * b.value;
  for (int i = 0; i < D; ++i) r.d1[i] = a.d1[i] * b.value + a.value * b.d1[i];
  for (int i = 0; i < D; ++i)
    for (int k = i; k < D; ++k) {
      const int s = Jet<T, D>::slot(i, k);
      r.d2[s] = a.d2[s] * b.value + a.value * b.d2[s] + a.d1[i] * b.d1[k] + a.d1[k] * b.d1[i];
    }
  return r;
}

template <class T, int D>
Jet<T, D> operator+(const Jet<T, D>& a, const Jet<T, D>& b) {
  Jet<T, D> r;
  r.value = a.value + b.value;
  for (int i = 0; i < D; ++i) r.d1[i] = a.d1[i] + b.d1[i];
  for (int s = 0; s < Jet<T, D>::kSecond; ++s) r.d2[s] = a.d2[s] + b.d2[s];
  return r;
}

/// bias + sum_k w_k y_k, component by component.
template <class T, int D>
Jet<T, D> affine(std::span<const T> w, std::span<const Jet<T, D>> y, const T& bias) {
  using ad::dot_with;
  Jet<T, D> r;
  r.value = dot_with(w, [&](std::size_t k) -> const T& { return y[k].value; }, bias);
  for (int i = 0; i < D; ++i) r.d1[i] = dot_with(w, [&](std::size_t k) -> const T& { return y[k].d1[i]; }, T{});
  for (int s = 0; s < Jet<T, D>::kSecond; ++s)
    r.d2[s] = dot_with(w, [&](std::size_t k) -> const T& { return y[k].d2[s]; }, T{});
  return r;
}

}  // namespace newtonlab
