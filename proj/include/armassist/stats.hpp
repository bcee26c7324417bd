#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "armassist/types.hpp"

namespace armassist::stats {

using Vec = Eigen::VectorXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

// Mean of the two middle values for even sizes.
double median(const VecRef& x);

// Linear interpolation between order statistics at (n-1)q.
double quantile(const VecRef& x, double q);

struct Iqr {
  double q1 = 0.0;
  double q3 = 0.0;
};
Iqr iqr(const VecRef& x);

double normal_cdf(double z);
double normal_quantile(double p);

double paired_median_delta(const VecRef& baseline, const VecRef& assisted);

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;
  std::size_t n_nonzero = 0;
};

// Two-sided exact signed-rank test: zeros dropped, midranks for tied
// magnitudes, null distribution over all 2^n sign patterns.
WilcoxonResult wilcoxon_exact(const VecRef& deltas);

struct ConfidenceInterval {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  double level = 0.95;
  double z0 = 0.0;
  double acceleration = 0.0;
  int resamples = 0;
};

using Statistic = std::function<double(const VecRef&)>;
double median_statistic(const VecRef& x);

// Bias-corrected and accelerated bootstrap. Resamples are drawn in order from a
// single generator seeded with `seed`, so results are reproducible. Needs n >= 3
// and at least 1000 resamples.
ConfidenceInterval bca_ci(const VecRef& data, const Statistic& statistic, int resamples, std::uint64_t seed,
                          double level = 0.95);

// (#positive - #negative) / n over paired differences, zeros included in n.
double cliffs_delta_signed(const VecRef& deltas);

struct TrimmedMean {
  double value = 0.0;
  std::size_t dropped_each_side = 0;
  bool fell_back = false;  // sample too small to trim
};
TrimmedMean trimmed_mean(const VecRef& x, double trim = 0.2);

struct ConditionValues {
  double ti = 0.0;
  double rom_deg = 0.0;
  double reps_per_min = 0.0;
  double fmed_slope = 0.0;
};

struct SubjectPair {
  std::string id;
  ConditionValues baseline;
  ConditionValues assisted;
};

struct TrialValue {
  std::string subject_id;
  TaskKind task = TaskKind::push_extend;
  Condition condition = Condition::baseline;
  double value = 0.0;
};

struct TaskResampleResult {
  double point_estimate = 0.0;
  std::vector<double> contrasts;
  double sign_consistency = 1.0;
  std::vector<std::string> skipped_subjects;
};

// Redraws one trial per task per subject with replacement and recomputes the
// median paired delta of task-median values.
TaskResampleResult task_resample_sensitivity(const std::vector<TrialValue>& trials, int resamples,
                                             std::uint64_t seed);

struct ResponderThresholds {
  double ti_max = 0.30;
  double rom_gain_deg = 5.0;
  double reps_gain_per_min = 1.5;

  void validate() const;
  std::string to_string() const;
  static ResponderThresholds parse(const std::string& text);  // "ti=0.30,rom=5,reps=1.5"
};

struct ResponderRow {
  std::string criterion;
  int count = 0;
  int n = 0;
  double fraction = 0.0;
};

std::vector<ResponderRow> responder_table(const std::vector<SubjectPair>& subjects,
                                          const ResponderThresholds& thresholds);

}  // namespace armassist::stats
