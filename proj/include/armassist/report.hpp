#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "armassist/persist.hpp"
#include "armassist/stats.hpp"

namespace armassist::report {

using ordered_json = nlohmann::ordered_json;

struct AnalysisOptions {
  int b_resamples = 10000;
  std::uint64_t seed = 20240611;
  double trim = 0.2;
  int task_resamples = 1000;
  double level = 0.95;
  stats::ResponderThresholds thresholds;

  void validate() const;
};

struct OutcomeRow {
  std::string key;    // ti, rom, reps, fatigue
  std::string label;
  std::string unit;
  std::string delta_unit;
  bool has_levels = true;  // fatigue reports only the paired change
  double baseline_median = 0.0, baseline_q1 = 0.0, baseline_q3 = 0.0;
  double assisted_median = 0.0, assisted_q1 = 0.0, assisted_q3 = 0.0;
  double delta = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  double p_value = 1.0;
  double w_plus = 0.0;
  double cliffs_delta = 0.0;
  std::string effect_label;
  double trimmed_mean = 0.0;
  bool trimmed_fell_back = false;
  double task_sign_consistency = 1.0;
};

struct TechEndpoints {
  std::size_t sessions = 0;
  std::size_t completed_sessions = 0;
  double loop_rate_hz = 0.0;
  double median_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  std::size_t missed_deadlines = 0;
  std::size_t safety_interventions = 0;
  std::size_t stall_cuts = 0;
  int adverse_events = 0;
};

struct Report {
  int n_subjects = 0;
  std::vector<std::string> excluded_sessions;
  std::vector<std::string> dropped_subjects;
  std::vector<OutcomeRow> outcomes;
  std::vector<stats::ResponderRow> responders;
  std::vector<stats::SubjectPair> subjects;
  TechEndpoints tech;
  AnalysisOptions options;
  // ROM gain as the ratio of cohort medians, next to the median of per-subject gains.
  double rom_median_ratio_pct = 0.0;
};

// Subject-level values: per-task median over trials, then median over tasks.
// Subjects missing a condition are dropped and listed.
std::vector<stats::SubjectPair> aggregate_subjects(const std::vector<session::SummaryRow>& rows,
                                                   std::vector<std::string>* dropped = nullptr);

Report build_report(const std::vector<session::SummaryRow>& rows, const AnalysisOptions& options,
                    const TechEndpoints& tech = {}, std::vector<std::string> excluded_sessions = {});

ordered_json to_json(const Report& report);
Report report_from_json(const ordered_json& j);
std::string render_text(const Report& report);

const char* footer_text();

}  // namespace armassist::report
