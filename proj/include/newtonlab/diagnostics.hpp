#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "newtonlab/linalg.hpp"
#include "newtonlab/models.hpp"
#include "newtonlab/objectives.hpp"

namespace newtonlab {

enum class Classification { minimum, maximum, saddle, degenerate };

inline std::string to_string(Classification c) {
  switch (c) {
    case Classification::minimum: return "minimum";
    case Classification::maximum: return "maximum";
    case Classification::saddle: return "saddle";
    case Classification::degenerate: return "degenerate";
  }
  return "unknown";
}

/// 1e-6 * max(1, max |lambda|).
inline double default_zero_tol(std::span<const double> eigenvalues) {
  double m = 1.0;
  for (double l : eigenvalues) m = std::max(m, std::abs(l));
  return 1e-6 * m;
}

/// All lambda > tol: minimum. All lambda < -tol: maximum. Both signs beyond tol: saddle.
/// Anything else has an eigenvalue within tol of zero and no opposite sign to decide it.
inline Classification classify(std::span<const double> eigenvalues, double zero_tol) {
  std::size_t pos = 0, neg = 0;
  for (double l : eigenvalues) {
    if (l > zero_tol) ++pos;
    if (l < -zero_tol) ++neg;
  }
  if (pos > 0 && neg > 0) return Classification::saddle;
  if (pos == eigenvalues.size()) return Classification::minimum;
  if (neg == eigenvalues.size()) return Classification::maximum;
  return Classification::degenerate;
}

struct StationaryPointReport {
  Vector theta;
  Vector eigenvalues;
  Classification classification = Classification::degenerate;
  double zero_tol = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;

  std::size_t count_positive() const {
    return static_cast<std::size_t>(std::count_if(eigenvalues.begin(), eigenvalues.end(), [&](double l) { return l > zero_tol; }));
  }
  std::size_t count_negative() const {
    return static_cast<std::size_t>(std::count_if(eigenvalues.begin(), eigenvalues.end(), [&](double l) { return l < -zero_tol; }));
  }
  std::size_t count_near_zero() const { return eigenvalues.size() - count_positive() - count_negative(); }
};

/// Spectrum and classification at theta. A negative zero_tol selects default_zero_tol.
inline StationaryPointReport analyze(const Objective& objective, std::span<const double> theta, double zero_tol = -1.0) {
  const DerivativeBundle b = objective.derivatives(theta);
  StationaryPointReport r;
  r.theta.assign(theta.begin(), theta.end());
  r.eigenvalues = sym_eig(b.hessian).eigenvalues;
  r.zero_tol = zero_tol < 0.0 ? default_zero_tol(r.eigenvalues) : zero_tol;
  r.classification = classify(r.eigenvalues, r.zero_tol);
  r.loss = b.value;
  r.grad_norm = norm2(b.gradient);
  return r;
}

/// Cosine of each column of `functions` (grid values, one vector per function) with `target`
/// in the quadrature inner product. Functions with norm <= zero_norm give nullopt.
inline std::vector<std::optional<double>> grid_cosines(const Grid& grid, std::span<const double> target,
                                                       const std::vector<Vector>& functions, double zero_norm = 1e-12) {
  const Vector vhat = normalize(grid, target);
  std::vector<std::optional<double>> out;
  out.reserve(functions.size());
  for (const Vector& h : functions) {
    if (grid_norm(grid, h) <= zero_norm) {
      out.emplace_back(std::nullopt);
      continue;
    }
    out.emplace_back(grid_inner(grid, vhat, normalize(grid, h)));
  }
  return out;
}

/// Basis values, one vector per basis function, over the grid.
inline std::vector<Vector> basis_on_grid(const Model& model, std::span<const double> theta, const Grid& grid) {
  std::vector<Vector> h(model.basis_count(), Vector(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto b = model.basis_jets<double, 0>(theta, grid.point(i));
    for (std::size_t k = 0; k < b.size(); ++k) h[k][i] = b[k].value;
  }
  return h;
}

enum class PinnMode { pinn1d, pinn2d };

/// Images of the basis under the differential operator: h'' in 1D, laplacian h + h in 2D.
inline std::vector<Vector> operator_images(const Model& model, std::span<const double> theta, const Grid& grid, PinnMode mode) {
  const int dim = mode == PinnMode::pinn1d ? 1 : 2;
  if (model.spec().input_dim != dim || grid.dim() != dim) throw ShapeError("orthogonality mode does not match model dimension");
  std::vector<Vector> h(model.basis_count(), Vector(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (dim == 1) {
      const auto b = model.basis_jets<double, 1>(theta, grid.point(i));
      for (std::size_t k = 0; k < b.size(); ++k) h[k][i] = b[k].d2[0];
    } else {
      const auto b = model.basis_jets<double, 2>(theta, grid.point(i));
      for (std::size_t k = 0; k < b.size(); ++k) h[k][i] = b[k].laplacian() + b[k].value;
    }
  }
  return h;
}

/// O_j = integral of normalized target times normalized basis function j.
inline std::vector<std::optional<double>> orthogonality_regression(const Model& model, std::span<const double> theta,
                                                                   const TargetFunction& target, const Grid& grid) {
  return grid_cosines(grid, target.sample(grid), basis_on_grid(model, theta, grid));
}

/// O_j = integral of normalized forcing times the normalized operator image of basis function j.
inline std::vector<std::optional<double>> orthogonality_pinn(const Model& model, std::span<const double> theta,
                                                             const TargetFunction& forcing, const Grid& grid, PinnMode mode) {
  return grid_cosines(grid, forcing.sample(grid), operator_images(model, theta, grid, mode));
}

/// Largest |O_j| over defined entries (0 when none are defined).
inline double max_abs_orthogonality(const std::vector<std::optional<double>>& o) {
  double m = 0.0;
  for (const auto& v : o)
    if (v) m = std::max(m, std::abs(*v));
  return m;
}

/// Entries as plain numbers, undefined entries as NaN.
inline Vector orthogonality_values(const std::vector<std::optional<double>>& o) {
  Vector out;
  out.reserve(o.size());
  for (const auto& v : o) out.push_back(v.value_or(std::numeric_limits<double>::quiet_NaN()));
  return out;
}

/// Quadrature L2 norm of the network output.
inline double output_norm(const Model& model, std::span<const double> theta, const Grid& grid) {
  Vector n(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) n[i] = forward(model, theta, grid.point(i));
  return grid_norm(grid, n);
}

/// True iff |theta^O|_inf < tol and the grid L2 norm of N is below tol.
inline bool detect_trivial(const ParamVector& theta, const Model& model, const Grid& grid, double tol) {
  return norm_inf(theta.outer_values()) < tol && output_norm(model, theta.values(), grid) < tol;
}

}  // namespace newtonlab
