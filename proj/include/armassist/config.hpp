#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "armassist/assist.hpp"
#include "armassist/report.hpp"
#include "armassist/types.hpp"

namespace armassist {

enum class ConditionOrder { baseline_first, randomized };

std::string_view to_string(ConditionOrder order);
ConditionOrder parse_condition_order(std::string_view text);

// "push_extend,reach_hold"
std::vector<TaskKind> parse_task_list(const std::string& text);

// Everything a run depends on. Written next to the output as run_config.txt
// so a run can be repeated from its own directory.
struct RunConfig {
  int cohort_size = 12;
  std::uint64_t seed = 20240611;
  std::vector<TaskKind> tasks = all_task_kinds();
  ConditionOrder condition_order = ConditionOrder::baseline_first;
  int trials_per_task = 1;
  double duration_s = 120.0;
  double mains_hz = 50.0;
  double mad_threshold = 3.5;
  std::string calibration_path;  // empty: built-in cohort calibration

  assist::SafetyEnvelope envelope;
  assist::PdGains gains;
  double assist_level = 0.5;
  bool run_loop = true;

  std::filesystem::path output_root = "out";
  std::string host = "127.0.0.1";
  int port = 8080;
  double ui_rate_hz = 25.0;

  report::AnalysisOptions analysis;

  void validate() const;
  std::string to_text() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace armassist
