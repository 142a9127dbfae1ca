// newtonlab: runs the registered experiments and writes their artifacts.

#include <charconv>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "newtonlab/artifacts.hpp"

namespace {

using namespace newtonlab;

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 1;
constexpr int kExitConfig = 2;

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw ConfigError("invalid seed '" + s + "'");
  return v;
}

/// "N" or "a..b" (inclusive).
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) return {parse_u64(text)};
  const auto a = parse_u64(text.substr(0, dots)), b = parse_u64(text.substr(dots + 2));
  if (b < a) throw ConfigError("empty seed range '" + text + "'");
  std::vector<std::uint64_t> out;
  for (auto s = a; s <= b; ++s) out.push_back(s);
  return out;
}

struct Flags {
  std::string config;
  std::string seed;
  std::string out;
  std::string format = "csv";
  bool plots = false;
  long trials = 0;
  unsigned jobs = 0;
  bool quiet = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--format", f.format, "Trajectory format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_flag("--plots", f.plots, "Write SVG figures");
  sub->add_option("--jobs", f.jobs, "Worker threads (default: hardware concurrency)");
  sub->add_flag("--quiet", f.quiet, "Suppress progress output");
}

RunOptions run_options(const Flags& f) {
  RunOptions o;
  if (f.jobs > 0) o.jobs = f.jobs;
  if (!f.quiet) o.progress = [](const std::string& m) { std::cerr << m << '\n'; };
  return o;
}

ArtifactOptions artifact_options(const Flags& f) {
  return {f.format == "json" ? TrajectoryFormat::json : TrajectoryFormat::csv, f.plots};
}

ExperimentConfig resolve(const std::string& id, const Flags& f) {
  ExperimentConfig c = f.config.empty() ? default_config(id) : load_config(f.config);
  if (c.id != id) throw ConfigError("config file is for '" + c.id + "', not '" + id + "'");
  if (!f.seed.empty()) c.seeds = parse_seeds(f.seed);
  if (f.trials > 0) {
    if (c.starts > 0) c.starts = static_cast<int>(f.trials);
    for (auto& e : c.census) e.trials = static_cast<std::size_t>(f.trials);
  }
  if (!f.out.empty()) c.output_dir = f.out;
  c.validate();
  return c;
}

int run_one(const std::string& id, const Flags& f) {
  const ExperimentConfig c = resolve(id, f);
  const ExperimentResult r = run_experiment(c, run_options(f));
  write_artifacts(r, artifact_options(f));
  std::cout << experiment_summary(r).dump(2) << '\n';
  return r.all_converged() ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact and quasi-Newton training experiments"};
  app.require_subcommand(1);
  Flags flags;

  for (const auto& id : experiment_ids()) {
    auto* sub = app.add_subcommand(id, "Run the " + id + " experiment");
    sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Seed N or inclusive range a..b");
    sub->add_option("--trials", flags.trials, "Random starts or census trials")->check(CLI::PositiveNumber);
    add_common(sub, flags);
    sub->callback([id, &flags] { throw CLI::RuntimeError(run_one(id, flags)); });
  }

  auto* reproduce = app.add_subcommand("reproduce", "Run every experiment and write report.md and report.json");
  add_common(reproduce, flags);
  reproduce->callback([&flags] {
    ReproduceOptions o;
    o.output_dir = flags.out.empty() ? "out" : flags.out;
    o.artifacts = artifact_options(flags);
    o.run = run_options(flags);
    const auto rows = reproduce_all(o);
    std::cout << report_markdown(rows);
    throw CLI::RuntimeError(kExitOk);
  });

  app.add_subcommand("list", "List registered experiments")->callback([] {
    for (const auto& id : experiment_ids()) std::cout << id << '\t' << figure_label(id) << '\n';
  });

  std::string dump_id;
  app.add_subcommand("config", "Print the built-in config of an experiment")
      ->callback([&dump_id] { std::cout << nlohmann::json(default_config(dump_id)).dump(2) << '\n'; })
      ->add_option("id", dump_id, "Experiment id")
      ->required()
      ->check(CLI::IsMember(experiment_ids()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::RuntimeError& e) {
    return e.get_exit_code();
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNotConverged;
  }
  return kExitOk;
}
