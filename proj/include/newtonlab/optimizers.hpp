#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "newtonlab/diffgraph.hpp"
#include "newtonlab/errors.hpp"
#include "newtonlab/linalg.hpp"
#include "newtonlab/matrix.hpp"
#include "newtonlab/objectives.hpp"

namespace newtonlab {

enum class Method { newton, lm_newton, bfgs, saddle_free, adam, gradient_descent };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::newton: return "newton";
    case Method::lm_newton: return "lm_newton";
    case Method::bfgs: return "bfgs";
    case Method::saddle_free: return "saddle_free";
    case Method::adam: return "adam";
    case Method::gradient_descent: return "gradient_descent";
  }
  return "unknown";
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

/// Backtracking Armijo search: accept alpha when f(x + alpha p) <= f(x) + c1 alpha g.p.
struct LineSearchConfig {
  double c1 = 1e-4;
  double shrink = 0.5;
  int max_halvings = 50;
};

struct BfgsConfig {
  LineSearchConfig line_search;
  double curvature_tol = 1e-10;  // update only if s.y > tol |s| |y|
};

struct SaddleFreeConfig {
  std::optional<double> damping;  // absolute; default relative_damping * max |lambda|
  double relative_damping = 1e-3;
  LineSearchConfig line_search;
};

struct OptimizerConfig {
  Method method = Method::newton;
  double eta = 1.0;        // step relaxation
  double epsilon = 0.0;    // convexity shift
  double threshold = 1e-8; // stop once |grad| < threshold
  int max_iters = 100;
  int max_shift_retries = 5;
  double learning_rate = 1e-3;  // gradient descent
  AdamConfig adam;
  BfgsConfig bfgs;
  SaddleFreeConfig saddle_free;

  void validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be nonnegative");
    if (!(threshold > 0.0)) throw ConfigError("threshold must be positive");
    if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double grad_inner = 0.0;  // |dL/dtheta^I|^2 / |I|
  double grad_outer = 0.0;  // |dL/dtheta^O|^2 / |O|
  Vector orthogonality;
  double step_norm = 0.0;
};

struct TrajectoryRecord {
  Method method = Method::newton;
  std::vector<EpochRecord> epochs;
  bool converged = false;
  std::string failure;  // empty unless a step failed
  ParamVector theta;    // final iterate
};

/// Per-epoch extra diagnostics, typically orthogonality values.
using Monitor = std::function<Vector(const ParamVector&)>;

/// Full Newton step -H^{-1} g.
inline Vector newton_step(const DerivativeBundle& b) {
  Vector x = solve_shifted(b.hessian, 0.0, b.gradient);
  for (double& v : x) v = -v;
  return x;
}

/// -eta (H + eps I)^{-1} g. A singular shifted system raises eps tenfold, up to `retries` times.
inline Vector lm_newton_step(const DerivativeBundle& b, double eta, double eps, int retries = 5) {
  double shift = eps;
  for (int attempt = 0;; ++attempt) {
    try {
      Vector x = solve_shifted(b.hessian, shift, b.gradient);
      for (double& v : x) v *= -eta;
      return x;
    } catch (const SingularSystem&) {
      if (attempt >= retries) throw StepFailure("shifted Newton system stayed singular after retries");
      shift = shift > 0.0 ? 10.0 * shift : 1e-10 * std::max(1.0, b.hessian.matrix().max_abs());
    }
  }
}

/// -(V |Lambda| V^T + damping I)^{-1} g. A negative damping selects relative_damping * max|lambda|.
inline Vector saddle_free_step(const DerivativeBundle& b, double damping = -1.0, double relative_damping = 1e-3) {
  const EigenDecomposition eig = sym_eig(b.hessian);
  const std::size_t n = eig.eigenvalues.size();
  double scale = 0.0;
  for (double l : eig.eigenvalues) scale = std::max(scale, std::abs(l));
  if (damping < 0.0) damping = relative_damping * scale;
  Vector step(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double denom = std::abs(eig.eigenvalues[j]) + damping;
    if (!(denom > 0.0)) throw StepFailure("saddle-free system has a zero eigenvalue and no damping");
    double proj = 0.0;
    for (std::size_t i = 0; i < n; ++i) proj += eig.eigenvectors(i, j) * b.gradient[i];
    const double c = -proj / denom;
    for (std::size_t i = 0; i < n; ++i) step[i] += c * eig.eigenvectors(i, j);
  }
  return step;
}

/// Inverse-Hessian estimate with the BFGS update, skipped when the curvature condition fails.
class BfgsInverse {
 public:
  explicit BfgsInverse(std::size_t n, double curvature_tol = 1e-10) : h_(Matrix::identity(n)), tol_(curvature_tol) {}

  const Matrix& matrix() const noexcept { return h_; }
  std::size_t skipped() const noexcept { return skipped_; }

  Vector direction(std::span<const double> g) const {
    Vector p = h_ * g;
    for (double& v : p) v = -v;
    return p;
  }

  /// Returns false when s.y <= tol |s||y| and the update was skipped.
  bool update(std::span<const double> s, std::span<const double> y) {
    const double sy = dot(s, y);
    if (!(sy > tol_ * norm2(s) * norm2(y))) {
      ++skipped_;
      return false;
    }
    const std::size_t n = s.size();
    if (first_) {
      // scale the initial identity so its size matches the observed curvature
      const double gamma = sy / dot(y, y);
      for (double& v : h_.data()) v *= gamma;
      first_ = false;
    }
    const double rho = 1.0 / sy;
    const Vector hy = h_ * y;
    const double yhy = dot(y, hy);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        h_(i, j) += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
    return true;
  }

 private:
  Matrix h_;
  double tol_;
  bool first_ = true;
  std::size_t skipped_ = 0;
};

/// Backtracking Armijo search along p; returns the accepted step alpha p and the new loss.
inline std::pair<Vector, double> armijo_step(const Objective& f, std::span<const double> theta, double loss,
                                             std::span<const double> g, const Vector& p, const LineSearchConfig& cfg) {
  const double slope = dot(g, p);
  if (!(slope < 0.0)) throw StepFailure("search direction is not a descent direction");
  Vector trial(theta.size());
  double alpha = 1.0;
  for (int i = 0; i <= cfg.max_halvings; ++i) {
    for (std::size_t j = 0; j < theta.size(); ++j) trial[j] = theta[j] + alpha * p[j];
    const double ft = f.value(trial);
    if (ft <= loss + cfg.c1 * alpha * slope) {
      Vector step(p);
      for (double& v : step) v *= alpha;
      return {step, ft};
    }
    alpha *= cfg.shrink;
  }
  throw StepFailure("line search found no sufficient decrease");
}

namespace detail {

inline double block_magnitude(std::span<const double> g, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  double s = 0.0;
  for (auto j : idx) s += g[j] * g[j];
  return s / static_cast<double>(idx.size());
}

}  // namespace detail

/// Drives `objective` from theta0 until |grad| < threshold or max_iters epochs.
/// One epoch evaluates the current iterate, records it, and (unless converged) takes a step.
inline TrajectoryRecord run(const Objective& objective, const ParamVector& theta0, const OptimizerConfig& config,
                            const Monitor& monitor = {}) {
  config.validate();
  if (theta0.size() != objective.dimension()) throw ShapeError("initial point does not match objective");
  const std::size_t n = theta0.size();
  const Method method = config.method;
  const bool second_order = method == Method::newton || method == Method::lm_newton || method == Method::saddle_free;

  TrajectoryRecord rec;
  rec.method = method;
  ParamVector theta = theta0;

  BfgsInverse bfgs(n, config.bfgs.curvature_tol);
  Vector previous_gradient, previous_step;
  Vector m(n, 0.0), v(n, 0.0);  // ADAM moments
  Vector grad(n);

  for (int k = 0; k < config.max_iters; ++k) {
    DerivativeBundle bundle;
    double loss = 0.0;
    if (second_order) {
      bundle = objective.derivatives(theta.values());
      loss = bundle.value;
      grad = bundle.gradient;
    } else {
      loss = objective.gradient(theta.values(), grad);
    }

    EpochRecord row;
    row.epoch = static_cast<std::size_t>(k);
    row.loss = loss;
    row.grad_norm = norm2(grad);
    row.grad_inner = detail::block_magnitude(grad, theta.inner_indices());
    row.grad_outer = detail::block_magnitude(grad, theta.outer_indices());
    if (monitor) row.orthogonality = monitor(theta);

    if (row.grad_norm < config.threshold) {
      rec.converged = true;
      rec.epochs.push_back(std::move(row));
      break;
    }

    Vector step;
    try {
      switch (method) {
        case Method::newton: step = newton_step(bundle); break;
        case Method::lm_newton:
          step = lm_newton_step(bundle, config.eta, config.epsilon, config.max_shift_retries);
          break;
        case Method::saddle_free: {
          const auto& sf = config.saddle_free;
          const Vector p = saddle_free_step(bundle, sf.damping.value_or(-1.0), sf.relative_damping);
          step = armijo_step(objective, theta.values(), loss, grad, p, config.saddle_free.line_search).first;
          break;
        }
        case Method::bfgs: {
          if (!previous_step.empty()) {
            Vector y(n);
            for (std::size_t j = 0; j < n; ++j) y[j] = grad[j] - previous_gradient[j];
            bfgs.update(previous_step, y);
          }
          const Vector p = bfgs.direction(grad);
          step = armijo_step(objective, theta.values(), loss, grad, p, config.bfgs.line_search).first;
          previous_gradient = grad;
          previous_step = step;
          break;
        }
        case Method::adam: {
          const auto& a = config.adam;
          const double t = static_cast<double>(k + 1);
          step.assign(n, 0.0);
          for (std::size_t j = 0; j < n; ++j) {
            m[j] = a.beta1 * m[j] + (1.0 - a.beta1) * grad[j];
            v[j] = a.beta2 * v[j] + (1.0 - a.beta2) * grad[j] * grad[j];
            const double mhat = m[j] / (1.0 - std::pow(a.beta1, t));
            const double vhat = v[j] / (1.0 - std::pow(a.beta2, t));
            step[j] = -a.learning_rate * mhat / (std::sqrt(vhat) + a.eps_hat);
          }
          break;
        }
        case Method::gradient_descent:
          step = grad;
          for (double& s : step) s *= -config.learning_rate;
          break;
      }
    } catch (const Error& e) {
      rec.failure = e.what();
      rec.epochs.push_back(std::move(row));
      break;
    }

    row.step_norm = norm2(step);
    for (std::size_t j = 0; j < n; ++j) theta[j] += step[j];
    rec.epochs.push_back(std::move(row));
  }
  rec.theta = std::move(theta);
  return rec;
}

inline TrajectoryRecord bfgs_run(const Objective& objective, const ParamVector& theta0, OptimizerConfig config,
                                 const Monitor& monitor = {}) {
  config.method = Method::bfgs;
  return run(objective, theta0, config, monitor);
}

inline TrajectoryRecord adam_run(const Objective& objective, const ParamVector& theta0, OptimizerConfig config,
                                 const Monitor& monitor = {}) {
  config.method = Method::adam;
  return run(objective, theta0, config, monitor);
}

}  // namespace newtonlab
