#pragma once

// Value and gradient of the network losses over a whole grid in one pass.
//
// Jets for a block of points are stored component-major, [component][unit][point],
// so the inner loops run over contiguous points. The reverse pass is written out
// by hand and computes exactly what the tape computes for the same loss; the
// tape stays the reference and is still used for Hessians.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "newtonlab/errors.hpp"
#include "newtonlab/matrix.hpp"
#include "newtonlab/models.hpp"
#include "newtonlab/quadrature.hpp"

namespace newtonlab {

enum class Residual {
  regression,  // N - v
  pinn1d,      // N'' + v
  pinn2d,      // laplacian N + N + v
};

namespace detail {

template <int D>
struct JetLayout {
  static constexpr int kSlots = D * (D + 1) / 2;
  static constexpr int kComponents = 1 + D + kSlots;
  static constexpr int d1(int i) { return 1 + i; }
  static constexpr int d2(int s) { return 1 + D + s; }
  static constexpr auto pairs() {
    std::array<std::pair<int, int>, kSlots> p{};
    int s = 0;
    for (int i = 0; i < D; ++i)
      for (int k = i; k < D; ++k) p[s++] = {i, k};
    return p;
  }
};

}  // namespace detail

/// 1/2 * weight * sum_i residual_i^2 for a model on a grid.
class BatchedLoss {
 public:
  static constexpr std::size_t kBlock = 128;

  BatchedLoss(std::shared_ptr<const Model> model, const Grid& grid, Vector data, Residual kind)
      : model_(std::move(model)), kind_(kind), points_(grid.size()), weight_(grid.weight()), data_(std::move(data)) {
    if (data_.size() != points_) throw ShapeError("one data value per grid point is required");
    switch (kind_) {
      case Residual::regression: prepare<0>(grid); break;
      case Residual::pinn1d: prepare<1>(grid); break;
      case Residual::pinn2d: prepare<2>(grid); break;
    }
  }

  std::size_t dimension() const { return model_->param_count(); }

  double value(std::span<const double> theta) const { return dispatch(theta, {}); }

  /// Writes the gradient into `grad` and returns the loss.
  double gradient(std::span<const double> theta, std::span<double> grad) const {
    if (grad.size() != theta.size()) throw ShapeError("gradient buffer has the wrong size");
    const double loss = dispatch(theta, grad);
    for (std::size_t j = 0; j < grad.size(); ++j)
      if (!std::isfinite(grad[j])) throw NonFiniteDerivative(j);
    if (!std::isfinite(loss)) throw NonFiniteDerivative(0);
    return loss;
  }

 private:
  struct Workspace {
    std::vector<std::vector<double>> z, a, f1, f2, f3;
    std::vector<double> input, h, r, hbar, abar, zbar, ybar;
  };

  double dispatch(std::span<const double> theta, std::span<double> grad) const {
    if (theta.size() != model_->param_count()) throw ShapeError("parameter count does not match model");
    switch (kind_) {
      case Residual::regression: return evaluate<0>(theta, grad);
      case Residual::pinn1d: return evaluate<1>(theta, grad);
      case Residual::pinn2d: return evaluate<2>(theta, grad);
    }
    return 0.0;
  }

  // Inputs and mask jets do not depend on theta and are sampled once.
  template <int D>
  void prepare(const Grid& grid) {
    using L = detail::JetLayout<D>;
    if (grid.dim() != model_->spec().input_dim) throw ShapeError("grid and model dimensions differ");
    if (D != 0 && D != model_->spec().input_dim) throw ShapeError("residual order does not match model dimension");
    features_ = static_cast<std::size_t>(model_->spec().feature_count());
    inputs_.assign(L::kComponents * features_ * points_, 0.0);
    masked_ = model_->spec().mask != BoundaryMask::none;
    if (masked_) mask_.assign(L::kComponents * points_, 0.0);
    for (std::size_t p = 0; p < points_; ++p) {
      const auto x = grid.point(p);
      const auto y = model_->input_features<double, D>(x);
      for (std::size_t k = 0; k < features_; ++k)
        for (int c = 0; c < L::kComponents; ++c) inputs_[(c * features_ + k) * points_ + p] = component<D>(y[k], c);
      if (masked_) {
        const auto m = model_->mask_jet<D>(x);
        for (int c = 0; c < L::kComponents; ++c) mask_[c * points_ + p] = component<D>(m, c);
      }
    }
  }

  template <int D>
  static double component(const Jet<double, D>& j, int c) {
    using L = detail::JetLayout<D>;
    if (c == 0) return j.value;
    if (c < L::d2(0)) return j.d1[static_cast<std::size_t>(c - 1)];
    return j.d2[static_cast<std::size_t>(c - L::d2(0))];
  }

  template <int D>
  double evaluate(std::span<const double> theta, std::span<double> grad) const {
    thread_local Workspace ws;
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t p0 = 0; p0 < points_; p0 += kBlock)
      loss += block<D>(theta, grad, p0, std::min(kBlock, points_ - p0), ws);
    return loss;
  }

  template <int D>
  double block(std::span<const double> theta, std::span<double> grad, std::size_t p0, std::size_t bp,
               Workspace& ws) const {
    using L = detail::JetLayout<D>;
    constexpr int K = L::kComponents;
    constexpr auto pairs = L::pairs();
    const auto& layers = model_->layers();
    const std::size_t depth = layers.size();
    const std::size_t m = model_->basis_count();
    const bool sine = model_->spec().activation == Activation::sine;
    const double w0 = model_->spec().omega0;

    ws.input.resize(K * features_ * bp);
    for (std::size_t row = 0; row < K * features_; ++row)
      std::copy_n(&inputs_[row * points_ + p0], bp, &ws.input[row * bp]);
    ws.z.resize(depth);
    ws.a.resize(depth);
    ws.f1.resize(depth);
    ws.f2.resize(depth);
    ws.f3.resize(depth);

    // forward
    const double* y = ws.input.data();
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& layer = layers[l];
      const std::size_t in = layer.in, out = layer.out;
      auto& z = ws.z[l];
      auto& a = ws.a[l];
      z.resize(K * out * bp);
      a.resize(K * out * bp);
      ws.f1[l].resize(out * bp);
      ws.f2[l].resize(out * bp);
      ws.f3[l].resize(out * bp);
      for (int c = 0; c < K; ++c)
        for (std::size_t j = 0; j < out; ++j) {
          double* zr = &z[(c * out + j) * bp];
          std::fill_n(zr, bp, c == 0 ? theta[layer.biases + j] : 0.0);
          for (std::size_t k = 0; k < in; ++k) {
            const double w = theta[layer.weights + j * in + k];
            const double* yr = y + (c * in + k) * bp;
            for (std::size_t p = 0; p < bp; ++p) zr[p] += w * yr[p];
          }
        }
      for (std::size_t j = 0; j < out; ++j) {
        double* f1 = &ws.f1[l][j * bp];
        double* f2 = &ws.f2[l][j * bp];
        double* f3 = &ws.f3[l][j * bp];
        const double* zv = &z[j * bp];
        double* av = &a[j * bp];
        for (std::size_t p = 0; p < bp; ++p) {
          if (sine) {
            const double s = std::sin(w0 * zv[p]);
            const double co = std::cos(w0 * zv[p]);
            av[p] = s;
            f1[p] = w0 * co;
            f2[p] = -w0 * w0 * s;
            f3[p] = -w0 * w0 * w0 * co;
          } else {
            const double t = std::tanh(zv[p]);
            const double d = 1.0 - t * t;
            av[p] = t;
            f1[p] = d;
            f2[p] = -2.0 * t * d;
            f3[p] = (6.0 * t * t - 2.0) * d;
          }
        }
        for (int i = 0; i < D; ++i) {
          const double* zi = &z[(L::d1(i) * out + j) * bp];
          double* ai = &a[(L::d1(i) * out + j) * bp];
          for (std::size_t p = 0; p < bp; ++p) ai[p] = f1[p] * zi[p];
        }
        for (int s = 0; s < L::kSlots; ++s) {
          const double* zs = &z[(L::d2(s) * out + j) * bp];
          const double* zi = &z[(L::d1(pairs[s].first) * out + j) * bp];
          const double* zk = &z[(L::d1(pairs[s].second) * out + j) * bp];
          double* as = &a[(L::d2(s) * out + j) * bp];
          for (std::size_t p = 0; p < bp; ++p) as[p] = f1[p] * zs[p] + f2[p] * zi[p] * zk[p];
        }
      }
      y = a.data();
    }

    const double* mk = masked_ ? &mask_[0] : nullptr;
    auto mask_at = [&](int c, std::size_t p) { return mk[c * points_ + p0 + p]; };
    const double* h = y;
    if (masked_) {
      ws.h.resize(K * m * bp);
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t p = 0; p < bp; ++p) {
          auto A = [&](int c) { return y[(c * m + k) * bp + p]; };
          const double mv = mask_at(0, p);
          ws.h[k * bp + p] = A(0) * mv;
          for (int i = 0; i < D; ++i)
            ws.h[(L::d1(i) * m + k) * bp + p] = A(L::d1(i)) * mv + A(0) * mask_at(L::d1(i), p);
          for (int s = 0; s < L::kSlots; ++s) {
            const int i = pairs[s].first, q = pairs[s].second;
            ws.h[(L::d2(s) * m + k) * bp + p] = A(L::d2(s)) * mv + A(0) * mask_at(L::d2(s), p) +
                                                A(L::d1(i)) * mask_at(L::d1(q), p) +
                                                A(L::d1(q)) * mask_at(L::d1(i), p);
          }
        }
      h = ws.h.data();
    }

    // Residual coefficients on the output jet components.
    std::array<double, K> coef{};
    if (kind_ == Residual::regression) coef[0] = 1.0;
    if constexpr (D == 1) coef[L::d2(0)] = 1.0;
    if constexpr (D == 2) {
      coef[0] = 1.0;
      coef[L::d2(0)] = 1.0;
      coef[L::d2(2)] = 1.0;
    }
    const double sign = kind_ == Residual::regression ? -1.0 : 1.0;
    const std::span<const double> outer = theta.subspan(model_->outer_offset(), m);

    ws.r.assign(bp, 0.0);
    for (int c = 0; c < K; ++c) {
      if (coef[c] == 0.0) continue;
      for (std::size_t k = 0; k < m; ++k) {
        const double* hr = h + (c * m + k) * bp;
        for (std::size_t p = 0; p < bp; ++p) ws.r[p] += outer[k] * hr[p];
      }
    }
    double loss = 0.0;
    for (std::size_t p = 0; p < bp; ++p) {
      ws.r[p] += sign * data_[p0 + p];
      loss += ws.r[p] * ws.r[p];
    }
    loss *= 0.5 * weight_;
    if (grad.empty()) return loss;

    // reverse
    for (double& v : ws.r) v *= weight_;  // now d loss / d residual
    const std::span<double> gouter = grad.subspan(model_->outer_offset(), m);
    ws.hbar.assign(K * m * bp, 0.0);
    for (int c = 0; c < K; ++c) {
      if (coef[c] == 0.0) continue;
      for (std::size_t k = 0; k < m; ++k) {
        const double* hr = h + (c * m + k) * bp;
        double* hb = &ws.hbar[(c * m + k) * bp];
        double acc = 0.0;
        for (std::size_t p = 0; p < bp; ++p) {
          acc += ws.r[p] * hr[p];
          hb[p] = outer[k] * ws.r[p];
        }
        gouter[k] += acc;
      }
    }

    std::vector<double>* abar = &ws.hbar;
    if (masked_) {
      ws.abar.assign(K * m * bp, 0.0);
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t p = 0; p < bp; ++p) {
          auto Hb = [&](int c) { return ws.hbar[(c * m + k) * bp + p]; };
          auto Ab = [&](int c) -> double& { return ws.abar[(c * m + k) * bp + p]; };
          const double mv = mask_at(0, p);
          double v = Hb(0) * mv;
          for (int i = 0; i < D; ++i) v += Hb(L::d1(i)) * mask_at(L::d1(i), p);
          for (int s = 0; s < L::kSlots; ++s) v += Hb(L::d2(s)) * mask_at(L::d2(s), p);
          Ab(0) = v;
          for (int i = 0; i < D; ++i) Ab(L::d1(i)) = Hb(L::d1(i)) * mv;
          for (int s = 0; s < L::kSlots; ++s) {
            const int i = pairs[s].first, q = pairs[s].second;
            Ab(L::d1(i)) += Hb(L::d2(s)) * mask_at(L::d1(q), p);
            Ab(L::d1(q)) += Hb(L::d2(s)) * mask_at(L::d1(i), p);
            Ab(L::d2(s)) = Hb(L::d2(s)) * mv;
          }
        }
      abar = &ws.abar;
    }

    for (std::size_t l = depth; l-- > 0;) {
      const auto& layer = layers[l];
      const std::size_t in = layer.in, out = layer.out;
      const auto& z = ws.z[l];
      const double* ab = abar->data();
      ws.zbar.resize(K * out * bp);
      double* zb = ws.zbar.data();
      for (std::size_t j = 0; j < out; ++j) {
        const double* f1 = &ws.f1[l][j * bp];
        const double* f2 = &ws.f2[l][j * bp];
        const double* f3 = &ws.f3[l][j * bp];
        auto Z = [&](int c) { return &z[(c * out + j) * bp]; };
        auto AB = [&](int c) { return &ab[(c * out + j) * bp]; };
        auto ZB = [&](int c) { return &zb[(c * out + j) * bp]; };
        for (std::size_t p = 0; p < bp; ++p) ZB(0)[p] = f1[p] * AB(0)[p];
        for (int i = 0; i < D; ++i)
          for (std::size_t p = 0; p < bp; ++p) {
            ZB(0)[p] += f2[p] * AB(L::d1(i))[p] * Z(L::d1(i))[p];
            ZB(L::d1(i))[p] = f1[p] * AB(L::d1(i))[p];
          }
        for (int s = 0; s < L::kSlots; ++s) {
          const int i = pairs[s].first, q = pairs[s].second;
          for (std::size_t p = 0; p < bp; ++p) {
            const double g = AB(L::d2(s))[p];
            ZB(0)[p] += g * (f2[p] * Z(L::d2(s))[p] + f3[p] * Z(L::d1(i))[p] * Z(L::d1(q))[p]);
            ZB(L::d1(i))[p] += g * f2[p] * Z(L::d1(q))[p];
            ZB(L::d1(q))[p] += g * f2[p] * Z(L::d1(i))[p];
            ZB(L::d2(s))[p] = f1[p] * g;
          }
        }
      }

      const double* yin = l == 0 ? ws.input.data() : ws.a[l - 1].data();
      for (std::size_t j = 0; j < out; ++j) {
        double gb = 0.0;
        const double* zv = &zb[j * bp];
        for (std::size_t p = 0; p < bp; ++p) gb += zv[p];
        grad[layer.biases + j] += gb;
        for (std::size_t k = 0; k < in; ++k) {
          double acc = 0.0;
          for (int c = 0; c < K; ++c) {
            const double* zr = &zb[(c * out + j) * bp];
            const double* yr = yin + (c * in + k) * bp;
            for (std::size_t p = 0; p < bp; ++p) acc += zr[p] * yr[p];
          }
          grad[layer.weights + j * in + k] += acc;
        }
      }

      if (l == 0) break;
      ws.ybar.assign(K * in * bp, 0.0);
      for (int c = 0; c < K; ++c)
        for (std::size_t j = 0; j < out; ++j) {
          const double* zr = &zb[(c * out + j) * bp];
          for (std::size_t k = 0; k < in; ++k) {
            const double w = theta[layer.weights + j * in + k];
            double* yb = &ws.ybar[(c * in + k) * bp];
            for (std::size_t p = 0; p < bp; ++p) yb[p] += w * zr[p];
          }
        }
      std::swap(ws.ybar, ws.abar);
      abar = &ws.abar;
    }
    return loss;
  }

  std::shared_ptr<const Model> model_;
  Residual kind_;
  std::size_t points_;
  double weight_;
  Vector data_;
  std::size_t features_ = 0;
  bool masked_ = false;
  Vector inputs_;  // [component][feature][point]
  Vector mask_;    // [component][point]
};

}  // namespace newtonlab
