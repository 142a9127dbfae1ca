#pragma once

// Experiment configurations, runners, and the claims each experiment is checked against.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "newtonlab/diagnostics.hpp"
#include "newtonlab/linalg.hpp"
#include "newtonlab/models.hpp"
#include "newtonlab/objectives.hpp"
#include "newtonlab/optimizers.hpp"

namespace newtonlab {

// ---------------------------------------------------------------------------
// JSON plumbing

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!key.empty() && key.front() == '_') continue;  // comments
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class E>
E parse_enum(const nlohmann::json& j, const std::vector<std::pair<E, std::string>>& table, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  for (const auto& [e, name] : table)
    if (name == j.get<std::string>()) return e;
  throw ConfigError(where + ": unknown value '" + j.get<std::string>() + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline const std::vector<std::pair<Method, std::string>>& method_names() {
  static const std::vector<std::pair<Method, std::string>> t{
      {Method::newton, "newton"}, {Method::lm_newton, "lm_newton"}, {Method::bfgs, "bfgs"},
      {Method::saddle_free, "saddle_free"}, {Method::adam, "adam"}, {Method::gradient_descent, "gradient_descent"}};
  return t;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const LineSearchConfig& c) {
  j = {{"c1", c.c1}, {"shrink", c.shrink}, {"max_halvings", c.max_halvings}};
}

inline void from_json(const nlohmann::json& j, LineSearchConfig& c) {
  detail::check_keys(j, {"c1", "shrink", "max_halvings"}, "line_search");
  detail::read(j, "c1", c.c1, "line_search");
  detail::read(j, "shrink", c.shrink, "line_search");
  detail::read(j, "max_halvings", c.max_halvings, "line_search");
}

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"method", to_string(c.method)},
       {"eta", c.eta},
       {"epsilon", c.epsilon},
       {"threshold", c.threshold},
       {"max_iters", c.max_iters},
       {"max_shift_retries", c.max_shift_retries}};
  switch (c.method) {
    case Method::adam:
      j["adam"] = {{"learning_rate", c.adam.learning_rate},
                   {"beta1", c.adam.beta1},
                   {"beta2", c.adam.beta2},
                   {"eps_hat", c.adam.eps_hat}};
      break;
    case Method::gradient_descent: j["learning_rate"] = c.learning_rate; break;
    case Method::bfgs:
      j["bfgs"] = {{"line_search", c.bfgs.line_search}, {"curvature_tol", c.bfgs.curvature_tol}};
      break;
    case Method::saddle_free:
      j["saddle_free"] = {{"damping", c.saddle_free.damping ? nlohmann::json(*c.saddle_free.damping) : nullptr},
                          {"relative_damping", c.saddle_free.relative_damping},
                          {"line_search", c.saddle_free.line_search}};
      break;
    default: break;
  }
}

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  const std::string w = "optimizer";
  detail::check_keys(j,
                     {"method", "eta", "epsilon", "threshold", "max_iters", "max_shift_retries", "learning_rate", "adam",
                      "bfgs", "saddle_free"},
                     w);
  if (!j.contains("method")) throw ConfigError("optimizer: missing 'method'");
  c.method = detail::parse_enum(j.at("method"), detail::method_names(), w + ".method");
  detail::read(j, "eta", c.eta, w);
  detail::read(j, "epsilon", c.epsilon, w);
  detail::read(j, "threshold", c.threshold, w);
  detail::read(j, "max_iters", c.max_iters, w);
  detail::read(j, "max_shift_retries", c.max_shift_retries, w);
  detail::read(j, "learning_rate", c.learning_rate, w);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    detail::check_keys(a, {"learning_rate", "beta1", "beta2", "eps_hat"}, "optimizer.adam");
    detail::read(a, "learning_rate", c.adam.learning_rate, "optimizer.adam");
    detail::read(a, "beta1", c.adam.beta1, "optimizer.adam");
    detail::read(a, "beta2", c.adam.beta2, "optimizer.adam");
    detail::read(a, "eps_hat", c.adam.eps_hat, "optimizer.adam");
  }
  if (j.contains("bfgs")) {
    const auto& b = j.at("bfgs");
    detail::check_keys(b, {"line_search", "curvature_tol"}, "optimizer.bfgs");
    detail::read(b, "line_search", c.bfgs.line_search, "optimizer.bfgs");
    detail::read(b, "curvature_tol", c.bfgs.curvature_tol, "optimizer.bfgs");
  }
  if (j.contains("saddle_free")) {
    const auto& s = j.at("saddle_free");
    detail::check_keys(s, {"damping", "relative_damping", "line_search"}, "optimizer.saddle_free");
    if (s.contains("damping") && !s.at("damping").is_null()) c.saddle_free.damping = s.at("damping").get<double>();
    detail::read(s, "relative_damping", c.saddle_free.relative_damping, "optimizer.saddle_free");
    detail::read(s, "line_search", c.saddle_free.line_search, "optimizer.saddle_free");
  }
  c.validate();
}

// ---------------------------------------------------------------------------
// Configuration

/// Loss selection. `amplitude` and `frequency` describe v(x) = amplitude * prod sin(frequency * pi * x_i).
struct ObjectiveSpec {
  std::string kind = "regression";  // circle | torus | regression | pinn1d | pinn2d
  double amplitude = 2.0;
  double frequency = 4.0;
  std::size_t grid_points = 100;  // per axis
  QuadratureRule rule = QuadratureRule::midpoint;
  TorusSpec torus;
};

struct CensusSpec {
  std::size_t n = 140;
  std::size_t trials = 10000;
};

struct ExperimentConfig {
  std::string id;
  std::vector<std::uint64_t> seeds{0};
  std::optional<ModelSpec> model;
  ObjectiveSpec objective;
  OptimizerConfig optimizer;
  std::optional<OptimizerConfig> comparison;  // second optimizer run from the same start
  int starts = 0;                             // random initial points per seed (manifold problems)
  std::vector<CensusSpec> census;
  double trivial_tol = 1e-3;
  int orthogonality_every = 1;  // record O_j every k epochs; 0 disables
  std::string output_dir = "out";

  void validate() const;
};

inline const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"circle",           "torus",            "torus-census",
                                            "regression-mlp",   "regression-siren", "regression-fourier",
                                            "pinn1d",           "pinn2d",           "random-hessian",
                                            "quasi-compare"};
  return ids;
}

inline void ExperimentConfig::validate() const {
  const auto& ids = experiment_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw ConfigError("unknown experiment '" + id + "'");
  const std::set<std::string> kinds{"circle", "torus", "regression", "pinn1d", "pinn2d"};
  if (!kinds.count(objective.kind)) throw ConfigError("unknown objective kind '" + objective.kind + "'");
  const bool network = objective.kind == "regression" || objective.kind == "pinn1d" || objective.kind == "pinn2d";
  if (id != "random-hessian") {
    if (seeds.empty()) throw ConfigError(id + ": seeds must be nonempty");
    optimizer.validate();
    if (comparison) comparison->validate();
  }
  if (network && id != "random-hessian") {
    if (!model) throw ConfigError(id + ": network experiments need a model");
    model->validate();
    if (objective.grid_points < 2) throw ConfigError(id + ": grid_points must be at least 2");
  }
  if ((objective.kind == "circle" || objective.kind == "torus") && id != "random-hessian" && starts < 1)
    throw ConfigError(id + ": manifold experiments need starts >= 1");
  if (objective.kind == "torus") objective.torus.validate();
  if (id == "random-hessian" && census.empty()) throw ConfigError("random-hessian: census list is empty");
  for (const auto& c : census)
    if (c.n < 1 || c.trials < 1) throw ConfigError(id + ": census entries need n >= 1 and trials >= 1");
  if (!(trivial_tol > 0.0)) throw ConfigError(id + ": trivial_tol must be positive");
  if (orthogonality_every < 0) throw ConfigError(id + ": orthogonality_every must be nonnegative");
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  j["experiment"] = c.id;
  j["seeds"] = c.seeds;
  if (c.model) j["model"] = *c.model;
  nlohmann::json o = {{"kind", c.objective.kind}};
  if (c.objective.kind == "torus") {
    o["torus"] = {{"R", c.objective.torus.axis_radius},
                  {"r", c.objective.torus.tube_radius},
                  {"e", c.objective.torus.eccentricity}};
  } else if (c.objective.kind != "circle") {
    o["amplitude"] = c.objective.amplitude;
    o["frequency"] = c.objective.frequency;
    o["grid_points"] = c.objective.grid_points;
    o["rule"] = c.objective.rule == QuadratureRule::midpoint ? "midpoint" : "endpoint";
  }
  if (c.id != "random-hessian") {
    j["objective"] = o;
    j["optimizer"] = c.optimizer;
  }
  if (c.comparison) j["comparison"] = *c.comparison;
  if (c.starts > 0) j["starts"] = c.starts;
  if (!c.census.empty()) {
    j["census"] = nlohmann::json::array();
    for (const auto& e : c.census) j["census"].push_back({{"n", e.n}, {"trials", e.trials}});
  }
  if (c.model) {
    j["trivial_tol"] = c.trivial_tol;
    j["orthogonality_every"] = c.orthogonality_every;
  }
  j["output_dir"] = c.output_dir;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  detail::check_keys(j,
                     {"experiment", "seeds", "model", "objective", "optimizer", "comparison", "starts", "census",
                      "trivial_tol", "orthogonality_every", "output_dir"},
                     "config");
  if (!j.contains("experiment")) throw ConfigError("config: missing 'experiment'");
  c = ExperimentConfig{};
  detail::read(j, "experiment", c.id, "config");
  detail::read(j, "seeds", c.seeds, "config");
  if (j.contains("model")) c.model = j.at("model").get<ModelSpec>();
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    detail::check_keys(o, {"kind", "amplitude", "frequency", "grid_points", "rule", "torus"}, "objective");
    detail::read(o, "kind", c.objective.kind, "objective");
    detail::read(o, "amplitude", c.objective.amplitude, "objective");
    detail::read(o, "frequency", c.objective.frequency, "objective");
    detail::read(o, "grid_points", c.objective.grid_points, "objective");
    if (o.contains("rule"))
      c.objective.rule = detail::parse_enum(
          o.at("rule"),
          std::vector<std::pair<QuadratureRule, std::string>>{{QuadratureRule::midpoint, "midpoint"},
                                                              {QuadratureRule::endpoint, "endpoint"}},
          "objective.rule");
    if (o.contains("torus")) {
      const auto& t = o.at("torus");
      detail::check_keys(t, {"R", "r", "e"}, "objective.torus");
      detail::read(t, "R", c.objective.torus.axis_radius, "objective.torus");
      detail::read(t, "r", c.objective.torus.tube_radius, "objective.torus");
      detail::read(t, "e", c.objective.torus.eccentricity, "objective.torus");
    }
  }
  if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<OptimizerConfig>();
  if (j.contains("comparison")) c.comparison = j.at("comparison").get<OptimizerConfig>();
  detail::read(j, "starts", c.starts, "config");
  if (j.contains("census")) {
    for (const auto& e : j.at("census")) {
      detail::check_keys(e, {"n", "trials"}, "census");
      CensusSpec s;
      detail::read(e, "n", s.n, "census");
      detail::read(e, "trials", s.trials, "census");
      c.census.push_back(s);
    }
  }
  detail::read(j, "trivial_tol", c.trivial_tol, "config");
  detail::read(j, "orthogonality_every", c.orthogonality_every, "config");
  detail::read(j, "output_dir", c.output_dir, "config");
  c.validate();
}

/// Built-in configuration of a registered experiment.
inline ExperimentConfig default_config(const std::string& id) {
  ExperimentConfig c;
  c.id = id;
  c.output_dir = "out/" + id;

  OptimizerConfig newton;
  newton.method = Method::newton;
  newton.threshold = 1e-10;
  newton.max_iters = 100;

  auto mlp = [] {
    ModelSpec s;
    s.input_dim = 1;
    s.hidden_widths = {10, 10};
    return s;
  };
  auto lm = [](double eta, double eps, double threshold, int iters) {
    OptimizerConfig o;
    o.method = Method::lm_newton;
    o.eta = eta;
    o.epsilon = eps;
    o.threshold = threshold;
    o.max_iters = iters;
    return o;
  };
  auto seeds = [](std::uint64_t n) {
    std::vector<std::uint64_t> s(n);
    for (std::uint64_t i = 0; i < n; ++i) s[i] = i;
    return s;
  };

  if (id == "circle") {
    c.objective.kind = "circle";
    c.optimizer = newton;
    c.starts = 20;
  } else if (id == "torus" || id == "torus-census") {
    c.objective.kind = "torus";
    c.optimizer = newton;
    c.starts = id == "torus" ? 25 : 100;
  } else if (id == "regression-mlp") {
    c.model = mlp();
    c.optimizer = lm(5e-2, 5e-2, 1e-5, 5000);
    c.seeds = seeds(10);
  } else if (id == "regression-siren") {
    c.model = mlp();
    c.model->activation = Activation::sine;
    c.model->omega0 = 4.0;
    c.optimizer = lm(5e-2, 1e-1, 1e-3, 3000);
    c.seeds = seeds(5);
  } else if (id == "regression-fourier") {
    c.model = mlp();
    c.model->fourier = FourierFeatures{10, 1.5};
    c.optimizer = lm(5e-2, 1e-1, 1e-3, 1000);
    c.seeds = seeds(10);
  } else if (id == "pinn1d") {
    c.model = mlp();
    c.model->activation = Activation::sine;
    c.model->omega0 = 4.0;
    c.model->mask = BoundaryMask::sine;
    c.objective.kind = "pinn1d";
    c.objective.amplitude = 100.0;
    c.optimizer = lm(5e-2, 1e-1, 1.0, 3000);
    c.seeds = seeds(5);
  } else if (id == "pinn2d") {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_widths = {10, 10};
    s.activation = Activation::sine;
    s.omega0 = 5.0;
    s.mask = BoundaryMask::sine_product;
    c.model = s;
    c.objective.kind = "pinn2d";
    c.objective.amplitude = 100.0;
    c.objective.grid_points = 50;
    c.optimizer = lm(1e-1, 5e-2, 1.0, 300);
    OptimizerConfig adam;
    adam.method = Method::adam;
    adam.adam.learning_rate = 1e-2;
    adam.threshold = 1.0;
    adam.max_iters = 50000;
    c.comparison = adam;
    c.orthogonality_every = 100;
  } else if (id == "random-hessian") {
    c.census = {{140, 10000}, {2, 100000}};
  } else if (id == "quasi-compare") {
    c.objective.kind = "torus";
    OptimizerConfig bfgs;
    bfgs.method = Method::bfgs;
    bfgs.threshold = 1e-8;
    bfgs.max_iters = 200;
    OptimizerConfig sfn = bfgs;
    sfn.method = Method::saddle_free;
    c.optimizer = bfgs;
    c.comparison = sfn;
    c.starts = 15;
  } else {
    throw ConfigError("unknown experiment '" + id + "'");
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

// ---------------------------------------------------------------------------
// Results

/// A checked statement about an experiment's outcome. `criterion` links it to an acceptance criterion.
struct Claim {
  int criterion = 0;
  std::string statement;
  bool passed = false;
  std::string measured;
};

struct RunResult {
  std::string name;  // unique within the experiment; used as the file stem
  std::uint64_t seed = 0;
  int start = -1;  // index of the random start, -1 for network runs
  TrajectoryRecord trajectory;
  std::optional<StationaryPointReport> report;
  std::optional<bool> trivial;
  std::optional<double> max_orthogonality;
  std::optional<double> outer_norm;   // max |theta^O|
  std::optional<double> output_norm;  // L2 norm of N on the grid
  std::optional<double> relative_error;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunResult> runs;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<Claim> claims;

  bool passed() const {
    return std::all_of(claims.begin(), claims.end(), [](const Claim& c) { return c.passed; });
  }
  bool all_converged() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.trajectory.converged; });
  }
};

inline void to_json(nlohmann::json& j, const Claim& c) {
  j = {{"criterion", c.criterion}, {"statement", c.statement}, {"passed", c.passed}, {"measured", c.measured}};
}

inline nlohmann::json run_summary(const std::string& experiment, const RunResult& r) {
  const auto& t = r.trajectory;
  nlohmann::json j = {{"experiment", experiment},
                      {"run", r.name},
                      {"seed", r.seed},
                      {"method", to_string(t.method)},
                      {"converged", t.converged},
                      {"failure", t.failure},
                      {"epochs", t.epochs.size()}};
  if (r.start >= 0) j["start"] = r.start;
  if (!t.epochs.empty()) {
    j["final_loss"] = t.epochs.back().loss;
    j["final_grad_norm"] = t.epochs.back().grad_norm;
  }
  if (r.trivial) j["trivial"] = *r.trivial;
  if (r.max_orthogonality) j["max_orthogonality"] = *r.max_orthogonality;
  if (r.outer_norm) j["outer_norm_inf"] = *r.outer_norm;
  if (r.output_norm) j["output_norm"] = *r.output_norm;
  if (r.relative_error) j["relative_l2_error"] = *r.relative_error;
  if (r.report) {
    j["classification"] = to_string(r.report->classification);
    j["zero_tol"] = r.report->zero_tol;
    j["eigen_counts"] = {{"positive", r.report->count_positive()},
                         {"negative", r.report->count_negative()},
                         {"near_zero", r.report->count_near_zero()}};
    j["eigenvalues"] = r.report->eigenvalues;
  }
  j["theta"] = std::vector<double>(t.theta.values().begin(), t.theta.values().end());
  return j;
}

// ---------------------------------------------------------------------------
// Runners

namespace detail {

/// Runs fn(0..count-1) on up to `jobs` threads. The first exception is rethrown after all tasks finish.
inline void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  return two_pi - a < 1e-9 ? 0.0 : a;
}

inline double angle_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, 2.0 * std::numbers::pi - d);
}

inline std::string count_of(std::size_t k, std::size_t n) { return std::to_string(k) + "/" + std::to_string(n); }

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

struct NetworkProblem {
  std::shared_ptr<const Model> model;
  TargetFunction target;
  Grid grid;
  std::shared_ptr<const Objective> loss;
  std::optional<PinnMode> mode;
};

inline NetworkProblem network_problem(const ExperimentConfig& c, std::uint64_t seed) {
  const auto& o = c.objective;
  const int dim = o.kind == "pinn2d" ? 2 : 1;
  auto model = std::make_shared<const Model>(build(*c.model, seed));
  auto target = TargetFunction::sine_product(dim, o.amplitude, o.frequency);
  Grid grid(o.grid_points, dim, o.rule);
  std::shared_ptr<const Objective> loss;
  std::optional<PinnMode> mode;
  if (o.kind == "regression") {
    loss = regression_loss(model, target, grid);
  } else if (o.kind == "pinn1d") {
    loss = pinn1d_loss(model, target, grid);
    mode = PinnMode::pinn1d;
  } else {
    loss = pinn2d_loss(model, target, grid);
    mode = PinnMode::pinn2d;
  }
  return {std::move(model), std::move(target), std::move(grid), std::move(loss), mode};
}

inline std::vector<std::optional<double>> orthogonality(const NetworkProblem& p, std::span<const double> theta) {
  return p.mode ? orthogonality_pinn(*p.model, theta, p.target, p.grid, *p.mode)
                : orthogonality_regression(*p.model, theta, p.target, p.grid);
}

inline Monitor orthogonality_monitor(const NetworkProblem& p, int every) {
  if (every <= 0) return {};
  auto calls = std::make_shared<long>(0);
  return [&p, every, calls](const ParamVector& theta) -> Vector {
    if ((*calls)++ % every != 0) return {};
    return orthogonality_values(orthogonality(p, theta.values()));
  };
}

/// Relative L2 error on the grid against the closed-form solution, when one exists.
inline std::optional<double> exact_error(const ExperimentConfig& c, const NetworkProblem& p, std::span<const double> theta) {
  const auto& o = c.objective;
  const double k = o.frequency * std::numbers::pi;
  double coef = 0.0;
  if (o.kind == "regression") coef = o.amplitude;
  else if (o.kind == "pinn1d") coef = o.amplitude / (k * k);              // u'' + v = 0
  else coef = o.amplitude / (2.0 * k * k - 1.0);                          // lap u + u + v = 0
  Vector diff(p.grid.size()), exact(p.grid.size());
  for (std::size_t i = 0; i < p.grid.size(); ++i) {
    double u = coef;
    for (double x : p.grid.point(i)) u *= std::sin(k * x);
    exact[i] = u;
    diff[i] = forward(*p.model, theta, p.grid.point(i)) - u;
  }
  const double n = grid_norm(p.grid, exact);
  if (!(n > 0.0)) return std::nullopt;
  return grid_norm(p.grid, diff) / n;
}

inline RunResult network_run(const ExperimentConfig& c, const NetworkProblem& p, std::uint64_t seed,
                             const OptimizerConfig& opt, const std::string& name, bool with_spectrum) {
  RunResult r;
  r.name = name;
  r.seed = seed;
  r.trajectory = run(*p.loss, p.model->initial(), opt, orthogonality_monitor(p, c.orthogonality_every));
  const ParamVector& theta = r.trajectory.theta;
  if (all_finite(theta.values())) {
    r.outer_norm = norm_inf(theta.outer_values());
    r.output_norm = output_norm(*p.model, theta.values(), p.grid);
    r.trivial = detect_trivial(theta, *p.model, p.grid, c.trivial_tol);
    r.max_orthogonality = max_abs_orthogonality(orthogonality(p, theta.values()));
    r.relative_error = exact_error(c, p, theta.values());
    if (with_spectrum) {
      try {
        r.report = analyze(*p.loss, theta.values());
      } catch (const Error&) {
      }
    }
  } else {
    r.trivial = false;
  }
  return r;
}

inline Vector random_angles(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  Vector v(n);
  for (double& a : v) a = u(rng);
  return v;
}

inline std::vector<RunResult> manifold_runs(const ExperimentConfig& c, const Objective& f, std::size_t dim,
                                            const std::vector<OptimizerConfig>& optimizers, unsigned jobs) {
  struct Task {
    std::uint64_t seed;
    int start;
    std::size_t opt;
    Vector theta0;
  };
  std::vector<Task> tasks;
  for (std::size_t o = 0; o < optimizers.size(); ++o) {
    for (auto seed : c.seeds) {
      std::mt19937_64 rng(seed + 7919 * o);
      for (int s = 0; s < c.starts; ++s) tasks.push_back({seed, s, o, random_angles(rng, dim)});
    }
  }
  std::vector<RunResult> runs(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    RunResult& r = runs[i];
    r.seed = t.seed;
    r.start = t.start;
    const std::string tag = optimizers.size() > 1 ? to_string(optimizers[t.opt].method) + "_" : "";
    r.name = c.id + "_seed" + std::to_string(t.seed) + "_" + tag + "start" + std::to_string(t.start);
    r.trajectory = run(f, ParamVector(t.theta0), optimizers[t.opt]);
    if (all_finite(r.trajectory.theta.values())) {
      try {
        r.report = analyze(f, r.trajectory.theta.values());
      } catch (const Error&) {
      }
    }
  });
  return runs;
}

struct StationaryPoint {
  Vector theta;  // wrapped to [0, 2 pi)
  Classification classification;
  Vector hessian_diagonal;
  double loss;
};

/// Distinct converged end points modulo 2 pi.
inline std::vector<StationaryPoint> distinct_points(const std::vector<RunResult>& runs, const Objective& f, double tol) {
  std::vector<StationaryPoint> out;
  for (const auto& r : runs) {
    if (!r.trajectory.converged || !r.report) continue;
    const auto th = r.trajectory.theta.values();
    const bool seen = std::any_of(out.begin(), out.end(), [&](const StationaryPoint& p) {
      for (std::size_t i = 0; i < th.size(); ++i)
        if (angle_distance(th[i], p.theta[i]) >= tol) return false;
      return true;
    });
    if (seen) continue;
    StationaryPoint p;
    for (double a : th) p.theta.push_back(wrap_angle(a));
    p.classification = r.report->classification;
    const auto b = f.derivatives(th);
    for (std::size_t i = 0; i < th.size(); ++i) p.hessian_diagonal.push_back(b.hessian(i, i));
    p.loss = b.value;
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const StationaryPoint& a, const StationaryPoint& b) { return a.theta < b.theta; });
  return out;
}

inline nlohmann::json points_json(const std::vector<StationaryPoint>& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : pts)
    a.push_back({{"theta", p.theta},
                 {"classification", to_string(p.classification)},
                 {"hessian_diagonal", p.hessian_diagonal},
                 {"loss", p.loss}});
  return a;
}

inline std::map<std::string, std::size_t> class_counts(const std::vector<StationaryPoint>& pts) {
  std::map<std::string, std::size_t> m{{"minimum", 0}, {"maximum", 0}, {"saddle", 0}, {"degenerate", 0}};
  for (const auto& p : pts) ++m[to_string(p.classification)];
  return m;
}

/// Loss of the zero network, 1/2 int v^2, for the sine-product targets.
inline double zero_output_loss(const ExperimentConfig& c) {
  const int dim = c.objective.kind == "pinn2d" ? 2 : 1;
  return 0.5 * c.objective.amplitude * c.objective.amplitude * std::pow(0.5, dim);
}

/// Converged, trivial, loss within 2% of the zero-network loss, and max |O_j| < 5e-2.
inline bool trivial_signature(const ExperimentConfig& c, const RunResult& r) {
  if (!r.trajectory.converged || !r.trivial.value_or(false) || r.trajectory.epochs.empty()) return false;
  const double ref = zero_output_loss(c);
  return std::abs(r.trajectory.epochs.back().loss - ref) <= 0.02 * ref && r.max_orthogonality.value_or(1.0) < 5e-2;
}

/// Mixed-sign spectrum with half or more of the eigenvalues near zero, tol = 1e-6 max |lambda|.
inline bool saddle_signature(const Vector& eigenvalues, std::size_t* near_zero = nullptr) {
  double top = 0.0;
  for (double l : eigenvalues) top = std::max(top, std::abs(l));
  const double tol = 1e-6 * top;
  std::size_t pos = 0, neg = 0, zero = 0;
  for (double l : eigenvalues) {
    if (l > tol) ++pos;
    else if (l < -tol) ++neg;
    else ++zero;
  }
  if (near_zero) *near_zero = zero;
  return pos > 0 && neg > 0 && 2 * zero >= eigenvalues.size();
}

inline bool mixed_spectrum(const StationaryPointReport& r) { return r.count_positive() > 0 && r.count_negative() > 0; }

}  // namespace detail

using Progress = std::function<void(const std::string&)>;

struct RunOptions {
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  Progress progress;
};

inline ExperimentResult run_circle(const ExperimentConfig& c, const RunOptions& opt) {
  ExperimentResult res{c};
  const auto f = circle_loss();
  res.runs = detail::manifold_runs(c, *f, 1, {c.optimizer}, opt.jobs);
  const double pi = std::numbers::pi;
  std::size_t good = 0, curvature_ok = 0;
  for (const auto& r : res.runs) {
    const double t = r.trajectory.theta[0];
    const double dmin = detail::angle_distance(t, pi / 4), dmax = detail::angle_distance(t, 5 * pi / 4);
    if (r.trajectory.converged && std::min(dmin, dmax) < 1e-8) ++good;
    if (r.report) {
      const double expected = dmin < dmax ? 2 * std::numbers::sqrt2 : -2 * std::numbers::sqrt2;
      if (std::abs(r.report->eigenvalues[0] - expected) < 1e-8) ++curvature_ok;
    }
  }
  const auto pts = detail::distinct_points(res.runs, *f, 1e-5);
  res.summary = {{"stationary_points", detail::points_json(pts)}};
  const std::size_t n = res.runs.size();
  res.claims.push_back({1, "Newton from every start converges to pi/4 or 5pi/4 within 1e-8", good == n,
                        detail::count_of(good, n)});
  res.claims.push_back({1, "second derivative equals +-2 sqrt(2) within 1e-8 at every end point", curvature_ok == n,
                        detail::count_of(curvature_ok, n)});
  return res;
}

inline ExperimentResult run_torus(const ExperimentConfig& c, const RunOptions& opt) {
  ExperimentResult res{c};
  const auto f = torus_loss(c.objective.torus);
  res.runs = detail::manifold_runs(c, *f, 2, {c.optimizer}, opt.jobs);
  const auto pts = detail::distinct_points(res.runs, *f, 1e-5);
  const auto counts = detail::class_counts(pts);
  double max_x3 = 0.0;
  for (const auto& p : pts)
    max_x3 = std::max(max_x3, std::abs(torus_point(c.objective.torus, p.theta[0], p.theta[1])[2]));
  std::size_t converged = 0;
  for (const auto& r : res.runs) converged += r.trajectory.converged;
  res.summary = {{"starts", res.runs.size()},
                 {"converged", converged},
                 {"distinct_points", pts.size()},
                 {"counts", counts},
                 {"max_abs_x3", max_x3},
                 {"stationary_points", detail::points_json(pts)}};

  const int crit = c.id == "torus-census" ? 2 : 0;
  res.claims.push_back({crit, "exactly 8 distinct stationary points (mod 2 pi, merge tol 1e-5)", pts.size() == 8,
                        std::to_string(pts.size())});
  res.claims.push_back({crit, "every stationary point has |x3| < 1e-8", max_x3 < 1e-8, detail::fmt(max_x3)});
  const bool split = counts.at("minimum") == 2 && counts.at("maximum") == 2 && counts.at("saddle") == 4;
  res.claims.push_back({crit, "classified as 2 minima, 2 maxima, 4 saddles", split,
                        std::to_string(counts.at("minimum")) + "/" + std::to_string(counts.at("maximum")) + "/" +
                            std::to_string(counts.at("saddle"))});
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{{3.7, 0.7}, {1.6, -0.7}, {-1.6, -1.1}}) {
    const detail::StationaryPoint* hit = nullptr;
    for (const auto& p : pts)
      if (std::abs(p.hessian_diagonal[0] - a) <= 0.05 && std::abs(p.hessian_diagonal[1] - b) <= 0.05) hit = &p;
    std::string measured = "none";
    if (hit) measured = "(" + detail::fmt(hit->hessian_diagonal[0]) + ", " + detail::fmt(hit->hessian_diagonal[1]) + ")";
    res.claims.push_back({crit, "a Hessian diagonal matches (" + detail::fmt(a) + ", " + detail::fmt(b) + ") within 0.05",
                          hit != nullptr, measured});
  }
  return res;
}

inline ExperimentResult run_network(const ExperimentConfig& c, const RunOptions& opt) {
  ExperimentResult res{c};
  const bool two_runs = c.comparison.has_value();
  const std::size_t per_seed = two_runs ? 2 : 1;
  res.runs.resize(c.seeds.size() * per_seed);
  detail::parallel_for(res.runs.size(), opt.jobs, [&](std::size_t i) {
    const std::uint64_t seed = c.seeds[i / per_seed];
    const bool comparison = two_runs && i % 2 == 0;
    const auto problem = detail::network_problem(c, seed);
    const OptimizerConfig& o = comparison ? *c.comparison : c.optimizer;
    std::string name = c.id + "_seed" + std::to_string(seed);
    if (two_runs) name += "_" + to_string(o.method);
    res.runs[i] = detail::network_run(c, problem, seed, o, name, !comparison);
    if (opt.progress) {
      const auto& t = res.runs[i].trajectory;
      opt.progress(name + ": " + std::to_string(t.epochs.size()) + " epochs, " +
                   (t.converged ? "converged" : "not converged") +
                   (res.runs[i].trivial.value_or(false) ? ", trivial" : ""));
    }
  });

  const double ref = detail::zero_output_loss(c);
  std::size_t trivial = 0, signature = 0, saddle = 0, converged = 0;
  std::vector<const RunResult*> newton_runs;
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    if (two_runs && i % 2 == 0) continue;
    const RunResult& r = res.runs[i];
    newton_runs.push_back(&r);
    converged += r.trajectory.converged;
    trivial += r.trajectory.converged && r.trivial.value_or(false);
    if (detail::trivial_signature(c, r)) {
      ++signature;
      if (r.report && detail::saddle_signature(r.report->eigenvalues)) ++saddle;
    }
  }
  const std::size_t n = newton_runs.size();
  res.summary = {{"runs", n},
                 {"converged", converged},
                 {"trivial", trivial},
                 {"trivial_signature", signature},
                 {"zero_output_loss", ref}};

  const std::string sig = "converge trivially with loss within 2% of " + detail::fmt(ref) + " and max|O_j| < 5e-2";
  if (c.id == "regression-mlp") {
    res.claims.push_back({4, "at least 6 of 10 runs " + sig, signature >= 6 && n == 10, detail::count_of(signature, n)});
    res.claims.push_back({5, "every trivial solution has a mixed-sign spectrum with >= 50% near-zero eigenvalues",
                          signature > 0 && saddle == signature, detail::count_of(saddle, signature)});
  } else if (c.id == "regression-siren") {
    res.claims.push_back({6, "at least 2 of 5 runs " + sig, signature >= 2 && n == 5, detail::count_of(signature, n)});
  } else if (c.id == "regression-fourier") {
    res.claims.push_back({6, "at least 2 of 10 runs " + sig, signature >= 2 && n == 10, detail::count_of(signature, n)});
  } else if (c.id == "pinn1d") {
    res.claims.push_back({7, "at least 3 of 5 runs " + sig, signature >= 3 && n == 5, detail::count_of(signature, n)});
  } else if (c.id == "pinn2d") {
    std::size_t accurate = 0, newton_trivial = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < res.runs.size(); i += 2) {
      const double e = res.runs[i].relative_error.value_or(INFINITY);
      worst = std::max(worst, e);
      accurate += e < 0.05;
      const RunResult& r = res.runs[i + 1];
      newton_trivial += r.trajectory.converged && r.trivial.value_or(false) && r.report && detail::mixed_spectrum(*r.report);
    }
    res.summary["adam_worst_relative_error"] = worst;
    res.claims.push_back({8, "ADAM reaches relative L2 error < 5% against the exact solution", accurate == n,
                          "worst " + detail::fmt(worst)});
    res.claims.push_back({8, "damped Newton converges to a trivial solution with a mixed-sign spectrum",
                          newton_trivial == n, detail::count_of(newton_trivial, n)});
  }
  return res;
}

inline ExperimentResult run_random_hessian(const ExperimentConfig& c, const RunOptions& opt) {
  ExperimentResult res{c};
  res.summary["census"] = nlohmann::json::array();
  const std::uint64_t seed = c.seeds.empty() ? 0 : c.seeds.front();
  for (const auto& e : c.census) {
    // split the trials over workers; draws depend only on (seed, trial)
    const unsigned workers = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(e.trials)));
    std::vector<CensusResult> parts(workers);
    detail::parallel_for(workers, workers, [&](std::size_t w) {
      for (std::size_t t = w; t < e.trials; t += workers) {
        switch (definiteness(random_symmetric(e.n, seed, t))) {
          case Definiteness::positive: ++parts[w].definite_positive; break;
          case Definiteness::negative: ++parts[w].definite_negative; break;
          case Definiteness::indefinite: ++parts[w].indefinite; break;
        }
      }
    });
    CensusResult r;
    for (const auto& p : parts) {
      r.definite_positive += p.definite_positive;
      r.definite_negative += p.definite_negative;
      r.indefinite += p.indefinite;
    }
    const double fraction = static_cast<double>(r.definite_positive + r.definite_negative) / e.trials;
    res.summary["census"].push_back({{"n", e.n},
                                     {"trials", e.trials},
                                     {"definite_positive", r.definite_positive},
                                     {"definite_negative", r.definite_negative},
                                     {"indefinite", r.indefinite},
                                     {"definite_fraction", fraction}});
    if (e.n == 2) {
      const double oracle = 1.0 - 1.0 / std::numbers::sqrt2;
      res.claims.push_back({9, "n=2 definite fraction within 0.005 of 1 - 1/sqrt(2)", std::abs(fraction - oracle) <= 0.005,
                            detail::fmt(fraction) + " vs " + detail::fmt(oracle)});
    } else if (e.n >= 100) {
      res.claims.push_back({9, "n=" + std::to_string(e.n) + ": no definite draw in " + std::to_string(e.trials),
                            r.definite_positive == 0 && r.definite_negative == 0,
                            "(" + std::to_string(r.definite_positive) + ", " + std::to_string(r.definite_negative) + ")"});
    }
  }
  return res;
}

inline ExperimentResult run_quasi_compare(const ExperimentConfig& c, const RunOptions& opt) {
  ExperimentResult res{c};
  const auto f = torus_loss(c.objective.torus);
  std::vector<OptimizerConfig> optimizers{c.optimizer};
  if (c.comparison) optimizers.push_back(*c.comparison);
  res.runs = detail::manifold_runs(c, *f, 2, optimizers, opt.jobs);
  std::size_t minima = 0, monotone = 0;
  for (const auto& r : res.runs) {
    minima += r.report && r.report->classification == Classification::minimum && r.trajectory.failure.empty();
    bool ok = true;
    const auto& e = r.trajectory.epochs;
    for (std::size_t k = 1; k < e.size(); ++k) ok = ok && e[k].loss <= e[k - 1].loss;
    monotone += ok;
  }
  const std::size_t n = res.runs.size();
  const auto pts = detail::distinct_points(res.runs, *f, 1e-5);
  res.summary = {{"runs", n}, {"minima", minima}, {"end_points", detail::points_json(pts)}};
  res.claims.push_back({10, "every run terminates at a point classified minimum", minima == n && n == 30,
                        detail::count_of(minima, n)});
  res.claims.push_back({10, "loss is non-increasing along every accepted iterate", monotone == n,
                        detail::count_of(monotone, n)});
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  c.validate();
  if (c.id == "circle") return run_circle(c, opt);
  if (c.id == "torus" || c.id == "torus-census") return run_torus(c, opt);
  if (c.id == "random-hessian") return run_random_hessian(c, opt);
  if (c.id == "quasi-compare") return run_quasi_compare(c, opt);
  return run_network(c, opt);
}

/// Published figure each experiment regenerates; used as a column of the reproduce report.
inline std::string figure_label(const std::string& id) {
  static const std::map<std::string, std::string> m{
      {"circle", "Fig. 1"},          {"torus", "Figs. 2, 3"},        {"torus-census", "Fig. 4"},
      {"regression-mlp", "Figs. 5, 6"}, {"regression-siren", "Fig. 7"}, {"regression-fourier", "Fig. 8"},
      {"pinn1d", "Fig. 9"},          {"pinn2d", "Figs. 10, 11"},     {"random-hessian", "text"},
      {"quasi-compare", "Fig. 12"}};
  const auto it = m.find(id);
  return it == m.end() ? "" : it->second;
}

}  // namespace newtonlab
