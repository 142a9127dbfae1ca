#pragma once

// Exact values, gradients, and dense Hessians of scalar objectives.
//
// An objective is written once as a generic callable
//     f(std::span<const ad::Var> theta, std::size_t term) -> ad::Var
// and summed over `terms`. Each term is taped separately so the tape stays
// small (a few thousand nodes for one quadrature point of a network).

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "newtonlab/errors.hpp"
#include "newtonlab/jet.hpp"
#include "newtonlab/matrix.hpp"
#include "newtonlab/tape.hpp"

namespace newtonlab {

/// Flat parameter vector with a partition into inner and outer indices.
class ParamVector {
 public:
  ParamVector() = default;

  /// All indices inner.
  explicit ParamVector(Vector values) : ParamVector(std::move(values), {}) {}

  ParamVector(Vector values, std::vector<std::size_t> outer) : values_(std::move(values)), outer_(std::move(outer)) {
    if (values_.empty()) throw ShapeError("parameter vector must be nonempty");
    std::sort(outer_.begin(), outer_.end());
    if (std::adjacent_find(outer_.begin(), outer_.end()) != outer_.end())
      throw ShapeError("outer indices must be distinct");
    if (!outer_.empty() && outer_.back() >= values_.size()) throw ShapeError("outer index out of range");
    std::vector<bool> is_outer(values_.size(), false);
    for (auto j : outer_) is_outer[j] = true;
    for (std::size_t j = 0; j < values_.size(); ++j)
      if (!is_outer[j]) inner_.push_back(j);
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  const std::vector<std::size_t>& inner_indices() const noexcept { return inner_; }
  const std::vector<std::size_t>& outer_indices() const noexcept { return outer_; }

  Vector gather(std::span<const double> full, const std::vector<std::size_t>& idx) const {
    Vector out;
    out.reserve(idx.size());
    for (auto j : idx) out.push_back(full[j]);
    return out;
  }
  Vector outer_values() const { return gather(values_, outer_); }
  Vector inner_values() const { return gather(values_, inner_); }

 private:
  Vector values_;
  std::vector<std::size_t> outer_;
  std::vector<std::size_t> inner_;
};

struct DerivativeBundle {
  double value = 0.0;
  Vector gradient;
  SymmetricMatrix hessian;
};

/// Per-thread differentiation workspace. Not shareable across threads.
class DiffEngine {
 public:
  template <class TermFn>
  double gradient(TermFn&& term, std::span<const double> theta, std::size_t terms, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double total = 0.0;
    ad::TapeScope scope(tape_);
    for (std::size_t i = 0; i < terms; ++i) {
      const ad::Var out = record(term, theta, i, false);
      total += out.value();
      if (out.is_constant()) continue;
      tape_.adjoints(out.index(), adj_);
      for (std::size_t j = 0; j < theta.size(); ++j) grad[j] += adj_[j];
    }
    check_finite(total, grad, nullptr);
    return total;
  }

  /// Hessian exactly as accumulated, before symmetrization.
  template <class TermFn>
  double raw_derivatives(TermFn&& term, std::span<const double> theta, std::size_t terms, Vector& grad,
                         Matrix& hessian) {
    const std::size_t n = theta.size();
    grad.assign(n, 0.0);
    hessian = Matrix(n, n);
    double total = 0.0;
    ad::TapeScope scope(tape_);
    for (std::size_t i = 0; i < terms; ++i) {
      const ad::Var out = record(term, theta, i, true);
      total += out.value();
      if (out.is_constant()) continue;
      tape_.adjoints(out.index(), adj_);
      for (std::size_t j = 0; j < n; ++j) grad[j] += adj_[j];
      tape_.accumulate_hessian(out.index(), adj_, n, hessian);
    }
    check_finite(total, grad, &hessian);
    return total;
  }

  template <class TermFn>
  DerivativeBundle derivatives(TermFn&& term, std::span<const double> theta, std::size_t terms) {
    DerivativeBundle b;
    Matrix raw;
    b.value = raw_derivatives(term, theta, terms, b.gradient, raw);
    b.hessian = SymmetricMatrix(std::move(raw));
    return b;
  }

  static DiffEngine& local() {
    thread_local DiffEngine engine;
    return engine;
  }

 private:
  template <class TermFn>
  ad::Var record(TermFn& term, std::span<const double> theta, std::size_t i, bool curvature) {
    tape_.clear(curvature);
    leaves_.resize(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) leaves_[j] = ad::Var::node(theta[j], tape_.leaf(theta[j]));
    return term(std::span<const ad::Var>(leaves_), i);
  }

  static void check_finite(double value, std::span<const double> grad, const Matrix* hessian) {
    for (std::size_t j = 0; j < grad.size(); ++j)
      if (!std::isfinite(grad[j])) throw NonFiniteDerivative(j);
    if (hessian != nullptr)
      for (std::size_t j = 0; j < hessian->rows(); ++j)
        if (!all_finite(hessian->row(j))) throw NonFiniteDerivative(j);
    if (!std::isfinite(value)) throw NonFiniteDerivative(0);
  }

  ad::Tape tape_;
  std::vector<ad::Var> leaves_;
  std::vector<double> adj_;
};

/// Value, gradient, and symmetrized Hessian of sum_{i < terms} term(theta, i).
template <class TermFn>
DerivativeBundle param_derivs(TermFn&& term, std::span<const double> theta, std::size_t terms = 1) {
  return DiffEngine::local().derivatives(term, theta, terms);
}

template <class TermFn>
double param_gradient(TermFn&& term, std::span<const double> theta, std::span<double> grad, std::size_t terms = 1) {
  return DiffEngine::local().gradient(term, theta, terms, grad);
}

}  // namespace newtonlab
