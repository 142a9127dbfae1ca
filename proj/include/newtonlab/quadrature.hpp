#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "newtonlab/errors.hpp"
#include "newtonlab/matrix.hpp"

namespace newtonlab {

enum class QuadratureRule { midpoint, endpoint };

/// Uniform nodes on [0, 1] with equal weights summing to one.
///   midpoint: x_i = (i + 1/2) / N
///   endpoint: x_i = i / (N - 1)
class Quadrature1D {
 public:
  explicit Quadrature1D(std::size_t n, QuadratureRule rule = QuadratureRule::midpoint) : rule_(rule) {
    if (n < 2) throw ConfigError("quadrature needs at least two nodes");
    nodes_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      nodes_[i] = rule == QuadratureRule::midpoint ? (static_cast<double>(i) + 0.5) / static_cast<double>(n)
                                                    : static_cast<double>(i) / static_cast<double>(n - 1);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  double node(std::size_t i) const { return nodes_[i]; }
  double weight() const noexcept { return 1.0 / static_cast<double>(nodes_.size()); }
  std::span<const double> nodes() const noexcept { return nodes_; }
  QuadratureRule rule() const noexcept { return rule_; }

 private:
  std::vector<double> nodes_;
  QuadratureRule rule_;
};

/// Tensor-product grid on [0, 1]^d, d in {1, 2}. Points are stored flat as x_0, ..., x_{d-1}.
class Grid {
 public:
  Grid(std::size_t per_axis, int dim, QuadratureRule rule = QuadratureRule::midpoint) : dim_(dim) {
    if (dim != 1 && dim != 2) throw UnsupportedDimension("grids support one or two dimensions");
    const Quadrature1D q(per_axis, rule);
    const std::size_t count = dim == 1 ? per_axis : per_axis * per_axis;
    weight_ = std::pow(q.weight(), dim);
    coords_.reserve(count * static_cast<std::size_t>(dim));
    if (dim == 1) {
      for (std::size_t i = 0; i < per_axis; ++i) coords_.push_back(q.node(i));
    } else {
      for (std::size_t i = 0; i < per_axis; ++i)
        for (std::size_t j = 0; j < per_axis; ++j) {
          coords_.push_back(q.node(i));
          coords_.push_back(q.node(j));
        }
    }
  }

  explicit Grid(const Quadrature1D& q) : Grid(q.size(), 1, q.rule()) {}

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return coords_.size() / static_cast<std::size_t>(dim_); }
  double weight() const noexcept { return weight_; }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(coords_).subspan(i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_));
  }

 private:
  int dim_;
  double weight_ = 0.0;
  std::vector<double> coords_;
};

/// Weighted sum of squares on the grid.
inline double grid_norm(const Grid& grid, std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(grid.weight() * s);
}

inline double grid_inner(const Grid& grid, std::span<const double> a, std::span<const double> b) {
  return grid.weight() * dot(a, b);
}

/// Rescales `values` so that the quadrature of the square is one. Zero functions stay zero.
inline Vector normalize(const Grid& grid, std::span<const double> values) {
  Vector out(values.begin(), values.end());
  const double n = grid_norm(grid, values);
  if (n > 0.0)
    for (double& v : out) v /= n;
  return out;
}

}  // namespace newtonlab
