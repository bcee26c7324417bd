// armassist: simulate cohorts, analyze them, export report tables, serve the dashboard backend.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "armassist/commands.hpp"
#include "armassist/config.hpp"
#include "armassist/service.hpp"

using namespace armassist;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<int> cohort_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> tasks;
  std::optional<std::string> condition_order;
  std::optional<double> duration_s;
  std::optional<std::string> output_root;
  std::optional<int> b_resamples;
  std::optional<double> trim;
  std::optional<std::string> thresholds;
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<double> ui_rate;
  bool no_loop = false;
};

// Config file first, then command-line flags on top, then one validation pass.
RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : RunConfig::load(o.config_path);
  if (o.cohort_size) c.cohort_size = *o.cohort_size;
  if (o.seed) {
    c.seed = *o.seed;
    c.analysis.seed = *o.seed;
  }
  if (o.tasks) c.tasks = parse_task_list(*o.tasks);
  if (o.condition_order) c.condition_order = parse_condition_order(*o.condition_order);
  if (o.duration_s) c.duration_s = *o.duration_s;
  if (o.output_root) c.output_root = *o.output_root;
  if (o.b_resamples) c.analysis.b_resamples = *o.b_resamples;
  if (o.trim) c.analysis.trim = *o.trim;
  if (o.thresholds) c.analysis.thresholds = stats::ResponderThresholds::parse(*o.thresholds);
  if (o.host) c.host = *o.host;
  if (o.port) c.port = *o.port;
  if (o.ui_rate) c.ui_rate_hz = *o.ui_rate;
  if (o.no_loop) c.run_loop = false;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wearable arm assist: simulation, analysis and session service"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "key = value run config file")->check(CLI::ExistingFile);
  };
  auto analysis_flags = [&](CLI::App* sub) {
    sub->add_option("--b-resamples", o.b_resamples, "bootstrap resamples per contrast (default 10000)");
    sub->add_option("--seed", o.seed, "seed for simulation and resampling (default 20240611)");
    sub->add_option("--trim", o.trim, "trim fraction for the trimmed-mean sensitivity (default 0.20)");
    sub->add_option("--thresholds", o.thresholds, "responder thresholds (default ti=0.3,rom=5,reps=1.5)");
  };

  auto* sim = app.add_subcommand("simulate", "generate, run and persist a cohort");
  common(sim);
  sim->add_option("-n,--cohort-size", o.cohort_size, "subjects (default 12)");
  sim->add_option("--seed", o.seed, "cohort seed (default 20240611)");
  sim->add_option("--tasks", o.tasks, "comma-separated tasks (default push_extend,pinch_grip,reach_hold)");
  sim->add_option("--condition-order", o.condition_order, "baseline_first (default) or randomized");
  sim->add_option("--duration", o.duration_s, "seconds per session (default 120)");
  sim->add_option("-o,--out", o.output_root, "output root (default out)");
  sim->add_flag("--no-loop", o.no_loop, "skip the assist loop replay");

  auto* ana = app.add_subcommand("analyze", "paired statistics over a simulated or recorded cohort");
  common(ana);
  ana->add_option("-i,--in", o.output_root, "session root (default out)");
  analysis_flags(ana);

  auto* rep = app.add_subcommand("report", "plot series and paired trajectories from an analysis");
  common(rep);
  rep->add_option("-i,--in", o.output_root, "session root (default out)");

  auto* srv = app.add_subcommand("serve", "session-control API and telemetry socket");
  common(srv);
  srv->add_option("--host", o.host, "bind address (default 127.0.0.1)");
  srv->add_option("--port", o.port, "port, 0 for any free one (default 8080)");
  srv->add_option("-o,--out", o.output_root, "where sessions are persisted (default out)");
  srv->add_option("--ui-rate", o.ui_rate, "telemetry frame rate, 25-50 Hz (default 25)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (sim->parsed()) {
      const auto r = commands::cmd_simulate(cfg);
      std::cout << r.sessions << " sessions written to " << cfg.output_root.string() << " (" << r.excluded
                << " excluded by QC)\n";
    } else if (ana->parsed()) {
      const auto report = commands::cmd_analyze(cfg.output_root, cfg.analysis);
      std::cout << report::render_text(report);
    } else if (rep->parsed()) {
      const auto files = commands::cmd_report(cfg.output_root);
      std::cout << files.text << "\nwrote " << files.plot_outcomes.string() << " and " << files.trajectories.string()
                << "\n";
    } else if (srv->parsed()) {
      return service::cmd_serve(cfg);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return commands::exit_code_for(e);
  }
}
