#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "armassist/assist.hpp"
#include "armassist/config.hpp"
#include "armassist/report.hpp"
#include "armassist/signalgen.hpp"

namespace armassist::commands {

namespace fs = std::filesystem;

signalgen::CohortCalibration load_calibration(const RunConfig& config);

struct SessionRun {
  SessionRecord record;
  std::optional<assist::LoopResult> loop;
  fs::path directory;
};

struct SessionHooks {
  telemetry::Packetizer* telemetry = nullptr;
  const std::atomic<bool>* stop = nullptr;
  assist::SafetyState* safety = nullptr;
  bool realtime = false;
  std::optional<double> assist_level;  // overrides the config for assisted sessions
  const std::atomic<double>* live_assist_level = nullptr;
  std::atomic<bool>* reset_request = nullptr;
  std::function<void(const AssistCommand&)> on_command;
};

// Generate, run the assist loop over the streams, QC, compute outcomes and
// persist under root. Sessions that fail QC or yield no outcomes are kept on
// disk with the reason and left out of summary.csv. A loop stopped early
// truncates the record to the ticks that ran.
SessionRun run_session(const signalgen::SubjectProfile& profile, TaskKind task, Condition condition, int trial,
                       const RunConfig& config, const fs::path& root, const SessionHooks& hooks = {});

struct SimulateResult {
  std::size_t sessions = 0;
  std::size_t excluded = 0;
  std::vector<fs::path> session_dirs;
};

// Starts a fresh summary.csv and index under config.output_root.
SimulateResult cmd_simulate(const RunConfig& config);

// Reads summary.csv plus per-session manifests and loop stats; writes
// analysis/report.json and analysis/report.txt.
report::Report cmd_analyze(const fs::path& root, const report::AnalysisOptions& options);

std::string plot_outcomes_csv(const report::Report& report);
std::string trajectories_csv(const report::Report& report);

struct ReportFiles {
  fs::path plot_outcomes;
  fs::path trajectories;
  std::string text;
};

// Plot series and paired trajectories from an existing analysis.
ReportFiles cmd_report(const fs::path& root);

// 0 ok, 2 validation, 3 IO, 4 insufficient data, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace armassist::commands
