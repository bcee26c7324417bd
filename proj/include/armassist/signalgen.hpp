#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "armassist/types.hpp"

namespace armassist::signalgen {

// Latent truth for one subject. Generated sessions carry these values, up to
// measurement error, in their tremor index, range of motion, cadence and EMG drift.
struct SubjectProfile {
  std::string id;
  double ti_baseline = 0.45;
  double ti_assisted = 0.36;
  double rom_baseline_deg = 80.0;
  double rom_assisted_deg = 90.0;
  double reps_baseline_per_min = 10.0;
  double reps_assisted_per_min = 13.0;
  double fmed_slope_baseline = -0.45;  // Hz/min
  double fmed_slope_assisted = -0.35;
  double fmed_start_hz = 95.0;
  double tremor_freq_hz = 6.0;
  std::uint64_t rng_seed = 1;

  double ti(Condition c) const { return c == Condition::assisted ? ti_assisted : ti_baseline; }
  double rom_deg(Condition c) const { return c == Condition::assisted ? rom_assisted_deg : rom_baseline_deg; }
  double reps_per_min(Condition c) const {
    return c == Condition::assisted ? reps_assisted_per_min : reps_baseline_per_min;
  }
  double fmed_slope(Condition c) const { return c == Condition::assisted ? fmed_slope_assisted : fmed_slope_baseline; }

  void validate() const;
};

// Median and quartiles of a split-normal marginal.
struct Quantiles {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;

  double at(double u) const;
};

// Cohort marginals. Tremor responders are the lowest-baseline fraction of the
// cohort; their assisted index settles at a controlled level, the rest improve
// by a smaller paired delta.
struct CohortCalibration {
  Quantiles ti_baseline{0.447, 0.425, 0.476};
  double ti_responder_fraction = 0.5;
  Quantiles ti_controlled_level{0.282, 0.278, 0.286};
  Quantiles ti_nonresponder_delta{-0.055, -0.070, -0.040};
  Quantiles rom_baseline_deg{81.53, 72.92, 87.04};
  Quantiles rom_gain_pct{12.65, 8.5, 14.8};
  Quantiles reps_baseline_per_min{10.03, 9.54, 10.52};
  Quantiles reps_delta_per_min{2.99, 2.3, 3.5};
  Quantiles fmed_slope_baseline{-0.45, -0.60, -0.30};
  Quantiles fmed_slope_delta{0.100, 0.083, 0.127};
  Quantiles fmed_start_hz{95.0, 90.0, 100.0};
  double tremor_freq_low_hz = 5.0;
  double tremor_freq_high_hz = 8.0;

  void validate() const;
  std::string to_text() const;
  static CohortCalibration parse(const std::string& text);
  static CohortCalibration load(const std::filesystem::path& path);
};

// Latin-hypercube draws so each marginal is spread evenly even for small n.
std::vector<SubjectProfile> generate_cohort(int n, const CohortCalibration& calibration, std::uint64_t seed);

const std::vector<ChannelKind>& default_channels();

// Deterministic in (profile, task, condition, trial). Both conditions draw
// their noise from the same streams.
SessionRecord generate_session(const SubjectProfile& profile, const TaskSpec& task, Condition condition,
                               const std::vector<ChannelKind>& channels = default_channels(), int trial = 0);

enum class LossPattern { random, burst };
LossPattern parse_loss_pattern(const std::string& text);

// Marks round(fraction * packets) packets lost on the chosen channel, or on every channel.
SessionRecord inject_missingness(const SessionRecord& record, double fraction, LossPattern pattern,
                                 std::uint64_t seed, std::optional<ChannelKind> channel = std::nullopt);

// Spectral shape of the simulated EMG: white noise through a fixed 20 Hz
// high-pass and a second-order low-pass whose corner sets the median frequency.
class EmgSourceModel {
 public:
  explicit EmgSourceModel(double rate_hz = 1000.0);
  double median_for_corner(double corner_hz) const;
  double corner_for_median(double median_hz) const;
  double power_for_corner(double corner_hz) const;  // output variance for unit white input
  double min_median() const { return medians_.front(); }
  double max_median() const { return medians_.back(); }

 private:
  double rate_hz_;
  std::vector<double> corners_, medians_, powers_;
};

}  // namespace armassist::signalgen
