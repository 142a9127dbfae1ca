#pragma once

// Scalar reverse-mode tape with recorded second partials.
//
// Every node stores the first partials with respect to its arguments and the
// nonzero second partials between argument slots. That is enough to run a
// forward tangent sweep followed by a reverse sweep on (adjoint, adjoint
// tangent) pairs, which yields Hessian columns without re-recording.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "newtonlab/matrix.hpp"

namespace newtonlab::ad {

/// Append-only storage whose push stays inline on the fast path.
template <class T>
class Buffer {
 public:
  void clear() noexcept { size_ = 0; }
  std::size_t size() const noexcept { return size_; }
  void push(const T& v) {
    if (size_ == data_.size()) data_.resize(std::max<std::size_t>(64, 2 * data_.size()));
    data_[size_++] = v;
  }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

 private:
  std::vector<T> data_;
  std::size_t size_ = 0;
};

class Tape {
 public:
  static constexpr std::uint32_t kConstant = std::numeric_limits<std::uint32_t>::max();
  static constexpr std::size_t kLanes = 16;

  struct Edge {
    std::uint32_t parent;
    double partial;
  };

  // One entry per unordered pair of argument slots. Sweeps apply it in both
  // directions, so an entry for a single slot holds half of f''.
  struct Curvature {
    std::uint32_t a;
    std::uint32_t b;
    double value;
  };

  /// Gradient-only recordings may drop second partials.
  void clear(bool record_curvature = true) {
    nodes_.clear();
    edges_.clear();
    curvature_.clear();
    record_curvature_ = record_curvature;
  }

  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(nodes_.size()); }
  double value(std::uint32_t node) const { return nodes_[node].value; }

  std::uint32_t leaf(double value) { return close(value); }

  void edge(std::uint32_t parent, double partial) { edges_.push({parent, partial}); }
  void curvature(std::uint32_t a, std::uint32_t b, double value) {
    if (record_curvature_) curvature_.push({a, b, value});
  }

  std::uint32_t close(double value) {
    nodes_.push({value, static_cast<std::uint32_t>(edges_.size()), static_cast<std::uint32_t>(curvature_.size())});
    return size() - 1;
  }

  /// Reverse sweep from `output`; adj[i] = d output / d node_i.
  void adjoints(std::uint32_t output, std::vector<double>& adj) const {
    adj.assign(static_cast<std::size_t>(output) + 1, 0.0);
    adj[output] = 1.0;
    for (std::uint32_t i = output + 1; i-- > 0;) {
      const double a = adj[i];
      if (a == 0.0) continue;
      for (std::uint32_t e = edge_begin(i); e < nodes_[i].edge_end; ++e) adj[edges_[e].parent] += edges_[e].partial * a;
    }
  }

  /// Adds the Hessian of `output` with respect to leaves [0, leaves) into `hessian`.
  /// `adj` must come from adjoints(output, ...) on a recording made with curvature.
  ///
  /// Leaves are seeded kLanes at a time. Rows of nodes that do not depend on the
  /// seeded leaves are never touched, which matters for layered networks where
  /// most parameters reach only a small part of the graph.
  void accumulate_hessian(std::uint32_t output, std::span<const double> adj, std::size_t leaves, Matrix& hessian) {
    if (!record_curvature_) throw std::logic_error("Hessian sweep on a gradient-only recording");
    const std::size_t nodes = static_cast<std::size_t>(output) + 1;
    if (tangent_.size() < nodes * kLanes) {
      tangent_.resize(nodes * kLanes);
      adjoint_tangent_.resize(nodes * kLanes);
    }
    auto row = [](std::vector<double>& v, std::size_t i) { return &v[i * kLanes]; };

    for (std::size_t first = 0; first < leaves; first += kLanes) {
      const std::size_t lanes = std::min(kLanes, leaves - first);
      active_.assign(nodes, 0);
      live_.assign(nodes, 0);
      for (std::size_t l = 0; l < lanes; ++l) {
        double* t = row(tangent_, first + l);
        std::fill_n(t, kLanes, 0.0);
        t[l] = 1.0;
        active_[first + l] = 1;
      }

      for (std::size_t i = leaves; i < nodes; ++i) {
        double* t = row(tangent_, i);
        for (std::uint32_t e = edge_begin(i); e < nodes_[i].edge_end; ++e) {
          const std::uint32_t q = edges_[e].parent;
          if (!active_[q]) continue;
          if (!active_[i]) {
            std::fill_n(t, kLanes, 0.0);
            active_[i] = 1;
          }
          const double p = edges_[e].partial;
          const double* tp = row(tangent_, q);
          for (std::size_t l = 0; l < kLanes; ++l) t[l] += p * tp[l];
        }
      }

      auto touch = [&](std::uint32_t q) {
        double* r = row(adjoint_tangent_, q);
        if (!live_[q]) {
          std::fill_n(r, kLanes, 0.0);
          live_[q] = 1;
        }
        return r;
      };
      for (std::size_t i = nodes; i-- > 0;) {
        if (live_[i]) {
          const double* ad = row(adjoint_tangent_, i);
          for (std::uint32_t e = edge_begin(i); e < nodes_[i].edge_end; ++e) {
            const double p = edges_[e].partial;
            double* ap = touch(edges_[e].parent);
            for (std::size_t l = 0; l < kLanes; ++l) ap[l] += p * ad[l];
          }
        }
        const double a = adj[i];
        if (a == 0.0) continue;
        for (std::uint32_t c = curv_begin(i); c < nodes_[i].curv_end; ++c) {
          const auto& cv = curvature_[c];
          const double s = cv.value * a;
          if (active_[cv.b]) {
            double* aa = touch(cv.a);
            const double* tb = row(tangent_, cv.b);
            for (std::size_t l = 0; l < kLanes; ++l) aa[l] += s * tb[l];
          }
          if (active_[cv.a]) {
            double* ab = touch(cv.b);
            const double* ta = row(tangent_, cv.a);
            for (std::size_t l = 0; l < kLanes; ++l) ab[l] += s * ta[l];
          }
        }
      }

      for (std::size_t j = 0; j < leaves; ++j) {
        if (!live_[j]) continue;
        const double* ad = row(adjoint_tangent_, j);
        for (std::size_t l = 0; l < lanes; ++l) hessian(j, first + l) += ad[l];
      }
    }
  }

  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

 private:
  struct Node {
    double value;
    std::uint32_t edge_end;
    std::uint32_t curv_end;
  };

  std::uint32_t edge_begin(std::size_t i) const { return i == 0 ? 0 : nodes_[i - 1].edge_end; }
  std::uint32_t curv_begin(std::size_t i) const { return i == 0 ? 0 : nodes_[i - 1].curv_end; }

  Buffer<Node> nodes_;
  Buffer<Edge> edges_;
  Buffer<Curvature> curvature_;
  bool record_curvature_ = true;
  std::vector<double> tangent_;
  std::vector<double> adjoint_tangent_;
  std::vector<unsigned char> active_;
  std::vector<unsigned char> live_;
};

/// Makes `tape` the recording target of the calling thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(Tape::active()) { Tape::active() = &tape; }
  ~TapeScope() { Tape::active() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

inline Tape& recording_tape() {
  Tape* t = Tape::active();
  if (t == nullptr) throw std::logic_error("differentiable operation outside of a TapeScope");
  return *t;
}

/// Differentiable scalar. Constants carry no node and fold eagerly.
class Var {
 public:
  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT: implicit so generic code can mix literals

  static Var node(double value, std::uint32_t index) {
    Var v(value);
    v.index_ = index;
    return v;
  }

  double value() const noexcept { return value_; }
  std::uint32_t index() const noexcept { return index_; }
  bool is_constant() const noexcept { return index_ == Tape::kConstant; }

 private:
  double value_ = 0.0;
  std::uint32_t index_ = Tape::kConstant;
};

namespace detail {

inline Var unary(const Var& x, double value, double d1, double d2) {
  if (x.is_constant()) return Var(value);
  Tape& t = recording_tape();
  t.edge(x.index(), d1);
  if (d2 != 0.0) t.curvature(x.index(), x.index(), 0.5 * d2);
  return Var::node(value, t.close(value));
}

}  // namespace detail

inline Var operator+(const Var& a, double c) {
  if (a.is_constant()) return Var(a.value() + c);
  if (c == 0.0) return a;
  Tape& t = recording_tape();
  t.edge(a.index(), 1.0);
  return Var::node(a.value() + c, t.close(a.value() + c));
}
inline Var operator+(double c, const Var& a) { return a + c; }

inline Var operator+(const Var& a, const Var& b) {
  if (b.is_constant()) return a + b.value();
  if (a.is_constant()) return b + a.value();
  Tape& t = recording_tape();
  t.edge(a.index(), 1.0);
  t.edge(b.index(), 1.0);
  const double v = a.value() + b.value();
  return Var::node(v, t.close(v));
}

inline Var operator*(const Var& a, double c) {
  if (a.is_constant() || c == 0.0) return Var(a.value() * c);
  if (c == 1.0) return a;
  Tape& t = recording_tape();
  t.edge(a.index(), c);
  return Var::node(a.value() * c, t.close(a.value() * c));
}
inline Var operator*(double c, const Var& a) { return a * c; }

inline Var operator*(const Var& a, const Var& b) {
  if (b.is_constant()) return a * b.value();
  if (a.is_constant()) return b * a.value();
  Tape& t = recording_tape();
  t.edge(a.index(), b.value());
  t.edge(b.index(), a.value());
  t.curvature(a.index(), b.index(), 1.0);
  const double v = a.value() * b.value();
  return Var::node(v, t.close(v));
}

inline Var operator-(const Var& a) { return a * -1.0; }
inline Var operator-(const Var& a, double c) { return a + (-c); }
inline Var operator-(double c, const Var& a) { return (a * -1.0) + c; }

inline Var operator-(const Var& a, const Var& b) {
  if (b.is_constant()) return a - b.value();
  if (a.is_constant()) return a.value() - b;
  Tape& t = recording_tape();
  t.edge(a.index(), 1.0);
  t.edge(b.index(), -1.0);
  const double v = a.value() - b.value();
  return Var::node(v, t.close(v));
}

inline Var operator/(const Var& a, double c) { return a * (1.0 / c); }

inline Var operator/(const Var& a, const Var& b) {
  if (b.is_constant()) return a / b.value();
  const double q = a.value() / b.value();
  const double inv = 1.0 / b.value();
  if (a.is_constant()) return detail::unary(b, q, -q * inv, 2.0 * q * inv * inv);
  Tape& t = recording_tape();
  t.edge(a.index(), inv);
  t.edge(b.index(), -q * inv);
  t.curvature(a.index(), b.index(), -inv * inv);
  t.curvature(b.index(), b.index(), q * inv * inv);  // half of 2a/b^3
  return Var::node(q, t.close(q));
}
inline Var operator/(double c, const Var& b) { return Var(c) / b; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

inline Var sin(const Var& x) {
  const double s = std::sin(x.value());
  return detail::unary(x, s, std::cos(x.value()), -s);
}

inline Var cos(const Var& x) {
  const double c = std::cos(x.value());
  return detail::unary(x, c, -std::sin(x.value()), -c);
}

inline Var tanh(const Var& x) {
  const double t = std::tanh(x.value());
  const double d = 1.0 - t * t;
  return detail::unary(x, t, d, -2.0 * t * d);
}

inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return detail::unary(x, e, e, e);
}

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return detail::unary(x, s, 0.5 / s, -0.25 / (s * x.value()));
}

inline Var square(const Var& x) { return detail::unary(x, x.value() * x.value(), 2.0 * x.value(), 2.0); }

/// init + sum_k a[k] * get(k) recorded as a single node.
template <class Get>
Var dot_with(std::span<const Var> a, Get&& get, const Var& init) {
  double v = init.value();
  bool any = !init.is_constant();
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Var& b = get(k);
    v += a[k].value() * b.value();
    any = any || !a[k].is_constant() || !b.is_constant();
  }
  if (!any) return Var(v);
  Tape& t = recording_tape();
  if (!init.is_constant()) t.edge(init.index(), 1.0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Var& b = get(k);
    const bool va = !a[k].is_constant();
    const bool vb = !b.is_constant();
    if (va && b.value() != 0.0) t.edge(a[k].index(), b.value());
    if (vb && a[k].value() != 0.0) t.edge(b.index(), a[k].value());
    if (va && vb) t.curvature(a[k].index(), b.index(), 1.0);
  }
  return Var::node(v, t.close(v));
}

inline Var dot(std::span<const Var> a, std::span<const Var> b, const Var& init = Var{}) {
  return dot_with(a, [&](std::size_t k) -> const Var& { return b[k]; }, init);
}

template <class Get>
double dot_with(std::span<const double> a, Get&& get, double init) {
  for (std::size_t k = 0; k < a.size(); ++k) init += a[k] * get(k);
  return init;
}

// Overloads so that model code written against a generic scalar works for plain doubles.
inline double square(double x) { return x * x; }

inline double dot(std::span<const double> a, std::span<const double> b, double init = 0.0) {
  for (std::size_t k = 0; k < a.size(); ++k) init += a[k] * b[k];
  return init;
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

}  // namespace newtonlab::ad
