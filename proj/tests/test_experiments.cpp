#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "newtonlab/artifacts.hpp"

using namespace newtonlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("newtonlab_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig short_mlp(int iters) {
  ExperimentConfig c = default_config("regression-mlp");
  c.seeds = {0, 1};
  c.optimizer.max_iters = iters;
  c.orthogonality_every = 3;
  return c;
}

}  // namespace

TEST(Registry, TenExperimentsWithValidDefaults) {
  EXPECT_EQ(experiment_ids().size(), 10u);
  for (const auto& id : experiment_ids()) {
    const ExperimentConfig c = default_config(id);
    EXPECT_EQ(c.id, id);
    EXPECT_NO_THROW(c.validate());
    EXPECT_FALSE(figure_label(id).empty());
  }
  EXPECT_THROW(default_config("nope"), ConfigError);
}

TEST(Registry, PublishedHyperparameters) {
  const auto mlp = default_config("regression-mlp");
  EXPECT_EQ(mlp.model->param_count(), 140u);
  EXPECT_EQ(mlp.optimizer.method, Method::lm_newton);
  EXPECT_DOUBLE_EQ(mlp.optimizer.eta, 5e-2);
  EXPECT_DOUBLE_EQ(mlp.optimizer.epsilon, 5e-2);
  EXPECT_DOUBLE_EQ(mlp.optimizer.threshold, 1e-5);
  EXPECT_EQ(mlp.seeds.size(), 10u);

  const auto fourier = default_config("regression-fourier");
  EXPECT_EQ(fourier.model->param_count(), 330u);
  EXPECT_DOUBLE_EQ(fourier.model->fourier->variance, 1.5);
  EXPECT_DOUBLE_EQ(fourier.optimizer.epsilon, 1e-1);

  const auto pinn2d = default_config("pinn2d");
  EXPECT_EQ(pinn2d.model->param_count(), 150u);
  EXPECT_DOUBLE_EQ(pinn2d.model->omega0, 5.0);
  EXPECT_DOUBLE_EQ(pinn2d.optimizer.eta, 1e-1);
  EXPECT_DOUBLE_EQ(pinn2d.optimizer.epsilon, 5e-2);
  EXPECT_DOUBLE_EQ(pinn2d.optimizer.threshold, 1.0);
  ASSERT_TRUE(pinn2d.comparison);
  EXPECT_EQ(pinn2d.comparison->method, Method::adam);
  EXPECT_DOUBLE_EQ(pinn2d.comparison->adam.learning_rate, 1e-2);

  const auto census = default_config("torus-census");
  EXPECT_GE(census.starts, 100);
  EXPECT_DOUBLE_EQ(census.objective.torus.tube_radius, 0.35);
  EXPECT_DOUBLE_EQ(census.objective.torus.eccentricity, 1.2);
}

TEST(ConfigJson, RoundTripsEveryDefault) {
  for (const auto& id : experiment_ids()) {
    const ExperimentConfig c = default_config(id);
    const nlohmann::json j = c;
    const auto back = j.get<ExperimentConfig>();
    EXPECT_EQ(nlohmann::json(back), j) << id;
  }
}

TEST(ConfigJson, CheckedInFilesMatchDefaults) {
  for (const auto& id : experiment_ids()) {
    const fs::path p = fs::path(NEWTONLAB_CONFIG_DIR) / (id + ".json");
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_EQ(nlohmann::json(load_config(p.string())), nlohmann::json(default_config(id))) << id;
  }
}

TEST(ConfigJson, Errors) {
  nlohmann::json j = default_config("circle");
  auto bad = [&](auto edit) {
    nlohmann::json k = j;
    edit(k);
    return k;
  };
  EXPECT_THROW(bad([](auto& k) { k["experiment"] = "square"; }).template get<ExperimentConfig>(), ConfigError);
  EXPECT_THROW(bad([](auto& k) { k["colour"] = 1; }).template get<ExperimentConfig>(), ConfigError);
  EXPECT_THROW(bad([](auto& k) { k["optimizer"]["method"] = "sgd"; }).template get<ExperimentConfig>(), ConfigError);
  EXPECT_THROW(bad([](auto& k) { k["optimizer"]["eta"] = 0.0; }).template get<ExperimentConfig>(), ConfigError);
  EXPECT_THROW(bad([](auto& k) { k["optimizer"]["eta"] = "big"; }).template get<ExperimentConfig>(), ConfigError);
  EXPECT_THROW(bad([](auto& k) { k["starts"] = 0; }).template get<ExperimentConfig>(), ConfigError);
  EXPECT_THROW(bad([](auto& k) { k["seeds"] = nlohmann::json::array(); }).template get<ExperimentConfig>(),
               ConfigError);
  EXPECT_THROW(bad([](auto& k) { k.erase("experiment"); }).template get<ExperimentConfig>(), ConfigError);
  EXPECT_NO_THROW(bad([](auto& k) { k["_comment"] = "ignored"; }).template get<ExperimentConfig>());

  nlohmann::json net = default_config("regression-mlp");
  net.erase("model");
  EXPECT_THROW(net.get<ExperimentConfig>(), ConfigError);
  net = default_config("regression-mlp");
  net["objective"]["rule"] = "simpson";
  EXPECT_THROW(net.get<ExperimentConfig>(), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(ConfigJson, SaddleFreeDampingOptional) {
  OptimizerConfig o;
  o.method = Method::saddle_free;
  EXPECT_FALSE(nlohmann::json(o).get<OptimizerConfig>().saddle_free.damping);
  o.saddle_free.damping = 0.25;
  EXPECT_DOUBLE_EQ(*nlohmann::json(o).get<OptimizerConfig>().saddle_free.damping, 0.25);
}

TEST(Circle, ClaimsHold) {
  const auto r = run_experiment(default_config("circle"));
  EXPECT_EQ(r.runs.size(), 20u);
  EXPECT_TRUE(r.passed());
  EXPECT_TRUE(r.all_converged());
  EXPECT_EQ(r.summary["stationary_points"].size(), 2u);
}

TEST(TorusCensus, EightPointsWithExpectedSplit) {
  const auto r = run_experiment(default_config("torus-census"));
  EXPECT_EQ(r.summary["distinct_points"], 8);
  EXPECT_EQ(r.summary["counts"]["minimum"], 2);
  EXPECT_EQ(r.summary["counts"]["maximum"], 2);
  EXPECT_EQ(r.summary["counts"]["saddle"], 4);
  EXPECT_LT(r.summary["max_abs_x3"].get<double>(), 1e-8);
}

TEST(QuasiCompare, EveryRunEndsAtAMinimum) {
  const auto r = run_experiment(default_config("quasi-compare"));
  EXPECT_EQ(r.runs.size(), 30u);
  EXPECT_TRUE(r.passed());
}

TEST(RandomHessian, SmallCensus) {
  ExperimentConfig c = default_config("random-hessian");
  c.census = {{140, 200}, {2, 20000}};
  const auto r = run_experiment(c);
  ASSERT_EQ(r.claims.size(), 2u);
  EXPECT_TRUE(r.claims[0].passed);
  EXPECT_NEAR(r.summary["census"][1]["definite_fraction"].get<double>(), 1 - 1 / std::numbers::sqrt2, 0.015);
}

TEST(Network, TrivialRunCarriesSignature) {
  ExperimentConfig c = default_config("regression-mlp");
  c.seeds = {0};
  const auto r = run_experiment(c);
  ASSERT_EQ(r.runs.size(), 1u);
  const auto& run = r.runs[0];
  EXPECT_TRUE(run.trajectory.converged);
  EXPECT_TRUE(run.trivial.value());
  EXPECT_LT(run.max_orthogonality.value(), 5e-2);
  EXPECT_NEAR(run.trajectory.epochs.back().loss, 1.0, 0.02);
  ASSERT_TRUE(run.report);
  EXPECT_TRUE(detail::saddle_signature(run.report->eigenvalues));
  EXPECT_NEAR(run.relative_error.value(), 1.0, 1e-3);
}

TEST(Network, OrthogonalitySampledEveryK) {
  const auto r = run_experiment(short_mlp(10));
  for (const auto& run : r.runs) {
    const auto& e = run.trajectory.epochs;
    ASSERT_GE(e.size(), 4u);
    EXPECT_EQ(e[0].orthogonality.size(), 10u);
    EXPECT_TRUE(e[1].orthogonality.empty());
    EXPECT_TRUE(e[2].orthogonality.empty());
    EXPECT_EQ(e[3].orthogonality.size(), 10u);
  }
  const std::string csv = trajectory_csv(r.runs[0].trajectory);
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header, "epoch,loss,grad_norm,grad_inner,grad_outer,O_1,O_2,O_3,O_4,O_5,O_6,O_7,O_8,O_9,O_10,step_norm");
  std::istringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  std::getline(rows, line);
  std::getline(rows, line);  // epoch 1: O cells blank
  EXPECT_NE(line.find(",,,,,,,,,,"), std::string::npos);
}

TEST(Artifacts, DeterministicOutputsAcrossRunsAndJobs) {
  const auto a = temp_dir("det");
  std::map<std::string, std::string> first;
  for (unsigned jobs : {1u, 2u}) {
    fs::remove_all(a);
    for (const std::string id : {"torus-census", "regression-mlp"}) {
      ExperimentConfig c = id == "regression-mlp" ? short_mlp(15) : default_config(id);
      c.output_dir = (a / id).string();
      RunOptions o;
      o.jobs = jobs;
      write_artifacts(run_experiment(c, o), {TrajectoryFormat::json, true});
    }
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(a))
      if (entry.is_regular_file()) files[fs::relative(entry.path(), a).string()] = slurp(entry.path());
    if (jobs == 1) first = std::move(files);
    else EXPECT_TRUE(files == first);
  }
  EXPECT_GT(first.size(), 100u);
  EXPECT_TRUE(fs::exists(a / "regression-mlp" / "regression-mlp_summary.json"));
  EXPECT_TRUE(fs::exists(a / "regression-mlp" / "regression-mlp_seed1.json"));
  EXPECT_TRUE(fs::exists(a / "regression-mlp" / "fig_regression-mlp_1.svg"));
  EXPECT_TRUE(fs::exists(a / "torus-census" / "fig_torus-census_0_start7.svg"));
  const auto run = nlohmann::json::parse(slurp(a / "regression-mlp" / "regression-mlp_seed0.json"));
  EXPECT_TRUE(run.contains("trivial"));
  EXPECT_EQ(run["theta"].size(), 140u);
}

TEST(Reproduce, ReportMarksOnlyTheBrokenRow) {
  const auto dir = temp_dir("reproduce");
  ReproduceOptions o;
  o.output_dir = dir.string();
  // Cheap stand-in runner: every experiment passes except one deliberately broken claim.
  auto runner = [](const ExperimentConfig& c, const RunOptions&) {
    ExperimentResult r{c};
    r.claims.push_back({1, "holds", true, "1"});
    if (c.id == "pinn1d") r.claims.push_back({7, "broken on purpose", false, "0"});
    if (c.id == "random-hessian") throw EigFailure("stub failure");
    return r;
  };
  const auto rows = reproduce_all(o, runner);
  ASSERT_EQ(rows.size(), 10u);
  for (const auto& row : rows) {
    const bool bad = row.experiment == "pinn1d" || row.experiment == "random-hessian";
    EXPECT_EQ(row.passed, !bad) << row.experiment;
  }
  EXPECT_EQ(rows[8].error, "stub failure");
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  ASSERT_GE(report.size(), 9u);
  std::size_t failed = 0;
  for (const auto& row : report) failed += !row["passed"].get<bool>();
  EXPECT_EQ(failed, 2u);
  const std::string md = slurp(dir / "report.md");
  EXPECT_NE(md.find("| pinn1d | Fig. 9 | FAIL |"), std::string::npos);
  EXPECT_NE(md.find("| circle | Fig. 1 | PASS |"), std::string::npos);
}
