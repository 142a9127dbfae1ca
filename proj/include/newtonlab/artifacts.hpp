#pragma once

// On-disk outputs: per-epoch CSV/JSON trajectories, summaries, SVG plots, and the reproduce report.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "newtonlab/experiments.hpp"

namespace newtonlab {

enum class TrajectoryFormat { csv, json };

namespace detail {

inline std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline std::size_t orthogonality_columns(const TrajectoryRecord& t) {
  std::size_t k = 0;
  for (const auto& e : t.epochs) k = std::max(k, e.orthogonality.size());
  return k;
}

/// Part of the run name after `<id>_seed<N>`, e.g. "_adam" or "_start3".
inline std::string run_suffix(const RunResult& run) {
  const std::string key = "_seed" + std::to_string(run.seed);
  const auto at = run.name.find(key);
  return at == std::string::npos ? "" : run.name.substr(at + key.size());
}

}  // namespace detail

/// epoch,loss,grad_norm,grad_inner,grad_outer,O_1..O_k,step_norm. Epochs without a sample leave O cells empty.
inline std::string trajectory_csv(const TrajectoryRecord& t) {
  const std::size_t k = detail::orthogonality_columns(t);
  std::ostringstream s;
  s << "epoch,loss,grad_norm,grad_inner,grad_outer";
  for (std::size_t j = 1; j <= k; ++j) s << ",O_" << j;
  s << ",step_norm\n";
  for (const auto& e : t.epochs) {
    s << e.epoch << ',' << detail::num(e.loss) << ',' << detail::num(e.grad_norm) << ',' << detail::num(e.grad_inner)
      << ',' << detail::num(e.grad_outer);
    for (std::size_t j = 0; j < k; ++j) {
      s << ',';
      if (j < e.orthogonality.size()) s << detail::num(e.orthogonality[j]);
    }
    s << ',' << detail::num(e.step_norm) << '\n';
  }
  return s.str();
}

inline nlohmann::json trajectory_json(const TrajectoryRecord& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : t.epochs) {
    nlohmann::json r = {{"epoch", e.epoch},
                        {"loss", e.loss},
                        {"grad_norm", e.grad_norm},
                        {"grad_inner", e.grad_inner},
                        {"grad_outer", e.grad_outer},
                        {"step_norm", e.step_norm}};
    if (!e.orthogonality.empty()) r["orthogonality"] = e.orthogonality;
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Log-scale loss and gradient norm against epoch.
inline std::string trajectory_svg(const TrajectoryRecord& t, const std::string& title) {
  const double w = 640, h = 400, left = 60, right = 20, top = 40, bottom = 40;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& e : t.epochs)
    for (double v : {e.loss, e.grad_norm})
      if (v > 0 && std::isfinite(v)) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
  if (!(hi >= lo)) lo = hi = 0;
  lo = std::floor(lo);
  hi = std::max(lo + 1, std::ceil(hi));
  const double n = std::max<double>(1, static_cast<double>(t.epochs.size()) - 1);
  auto px = [&](double i) { return left + (w - left - right) * i / n; };
  auto py = [&](double v) { return top + (h - top - bottom) * (hi - std::log10(v)) / (hi - lo); };
  auto path = [&](auto field) {
    std::ostringstream p;
    bool pen = false;
    for (std::size_t i = 0; i < t.epochs.size(); ++i) {
      const double v = field(t.epochs[i]);
      if (!(v > 0 && std::isfinite(v))) {
        pen = false;
        continue;
      }
      p << (pen ? " L" : " M") << std::fixed << std::setprecision(2) << px(i) << ' ' << py(v);
      pen = true;
    }
    return p.str();
  };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  for (int d = static_cast<int>(lo); d <= static_cast<int>(hi); ++d) {
    const double y = py(std::pow(10.0, d));
    s << "<line x1=\"" << left << "\" x2=\"" << w - right << "\" y1=\"" << y << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n<text x=\"4\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"10\">1e"
      << d << "</text>\n";
  }
  s << "<text x=\"" << w - right - 80 << "\" y=\"" << h - 10 << "\" font-family=\"sans-serif\" font-size=\"10\">epochs: "
    << t.epochs.size() << "</text>\n"
    << "<path d=\"" << path([](const EpochRecord& e) { return e.loss; }) << "\" fill=\"none\" stroke=\"#1f77b4\"/>\n"
    << "<path d=\"" << path([](const EpochRecord& e) { return e.grad_norm; })
    << "\" fill=\"none\" stroke=\"#d62728\"/>\n"
    << "<text x=\"" << left + 10 << "\" y=\"" << h - 10
    << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#1f77b4\">loss</text>\n"
    << "<text x=\"" << left + 50 << "\" y=\"" << h - 10
    << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#d62728\">|grad|</text>\n</svg>\n";
  return s.str();
}

inline nlohmann::json experiment_summary(const ExperimentResult& r) {
  nlohmann::json j = {{"experiment", r.config.id},
                      {"config", r.config},
                      {"summary", r.summary},
                      {"claims", r.claims},
                      {"passed", r.passed()},
                      {"all_converged", r.all_converged()}};
  j["runs"] = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json s = {{"run", run.name}, {"converged", run.trajectory.converged},
                        {"epochs", run.trajectory.epochs.size()}};
    if (!run.trajectory.epochs.empty()) s["final_loss"] = run.trajectory.epochs.back().loss;
    if (run.trivial) s["trivial"] = *run.trivial;
    if (run.report) s["classification"] = to_string(run.report->classification);
    j["runs"].push_back(std::move(s));
  }
  return j;
}

struct ArtifactOptions {
  TrajectoryFormat format = TrajectoryFormat::csv;
  bool plots = false;
};

/// Writes every run's trajectory and summary plus `<id>_summary.json` into config.output_dir.
inline void write_artifacts(const ExperimentResult& r, const ArtifactOptions& opt = {}) {
  const std::filesystem::path dir = r.config.output_dir;
  for (const auto& run : r.runs) {
    if (opt.format == TrajectoryFormat::csv)
      detail::write_file(dir / (run.name + ".csv"), trajectory_csv(run.trajectory));
    else
      detail::write_file(dir / (run.name + "_trajectory.json"), trajectory_json(run.trajectory).dump(1) + "\n");
    detail::write_file(dir / (run.name + ".json"), run_summary(r.config.id, run).dump(1) + "\n");
    if (opt.plots)
      detail::write_file(dir / ("fig_" + r.config.id + "_" + std::to_string(run.seed) + detail::run_suffix(run) + ".svg"),
                         trajectory_svg(run.trajectory, run.name));
  }
  detail::write_file(dir / (r.config.id + "_summary.json"), experiment_summary(r).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// reproduce

struct ReportRow {
  std::string experiment;
  std::string figure;
  bool passed = false;
  std::vector<Claim> claims;
  std::string error;  // set when the experiment threw
};

struct ReproduceOptions {
  std::string output_dir = "out";
  ArtifactOptions artifacts;
  RunOptions run;
  std::vector<std::string> experiments = experiment_ids();
};

using ExperimentRunner = std::function<ExperimentResult(const ExperimentConfig&, const RunOptions&)>;

inline std::string report_markdown(const std::vector<ReportRow>& rows) {
  std::ostringstream s;
  s << "# Reproduction report\n\n| experiment | figure | result | claims |\n|---|---|---|---|\n";
  for (const auto& r : rows) {
    std::size_t ok = 0;
    for (const auto& c : r.claims) ok += c.passed;
    s << "| " << r.experiment << " | " << r.figure << " | " << (r.passed ? "PASS" : "FAIL") << " | "
      << (r.error.empty() ? std::to_string(ok) + "/" + std::to_string(r.claims.size()) : "error: " + r.error) << " |\n";
  }
  for (const auto& r : rows) {
    if (r.claims.empty()) continue;
    s << "\n## " << r.experiment << "\n\n";
    for (const auto& c : r.claims)
      s << "- " << (c.passed ? "PASS" : "FAIL") << ": " << c.statement << " (measured " << c.measured << ")\n";
  }
  return s.str();
}

/// Runs every registered experiment with its default config. Failures are reported, not thrown.
inline std::vector<ReportRow> reproduce_all(const ReproduceOptions& opt, const ExperimentRunner& runner = run_experiment) {
  std::vector<ReportRow> rows;
  for (const auto& id : opt.experiments) {
    ReportRow row{id, figure_label(id)};
    try {
      ExperimentConfig c = default_config(id);
      c.output_dir = (std::filesystem::path(opt.output_dir) / id).string();
      if (opt.run.progress) opt.run.progress("running " + id);
      const ExperimentResult r = runner(c, opt.run);
      write_artifacts(r, opt.artifacts);
      row.passed = r.passed();
      row.claims = r.claims;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json e = {{"experiment", r.experiment}, {"figure", r.figure}, {"passed", r.passed}, {"claims", r.claims}};
    if (!r.error.empty()) e["error"] = r.error;
    j.push_back(std::move(e));
  }
  detail::write_file(std::filesystem::path(opt.output_dir) / "report.json", j.dump(1) + "\n");
  detail::write_file(std::filesystem::path(opt.output_dir) / "report.md", report_markdown(rows));
  return rows;
}

}  // namespace newtonlab
