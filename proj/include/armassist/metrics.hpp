#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "armassist/dsp.hpp"
#include "armassist/errors.hpp"
#include "armassist/pipeline.hpp"
#include "armassist/types.hpp"

namespace armassist::metrics {

struct TremorIndex {
  double value = 0.0;
  double band_low_hz = 4.0;
  double band_high_hz = 12.0;
  double ref_low_hz = 0.5;
  double ref_high_hz = 20.0;
  double window_start_s = 0.0;
};

// Fraction of 0.5-20 Hz power that falls in the 4-12 Hz tremor band.
TremorIndex tremor_index(const dsp::PsdEstimate& psd, double window_start_s = 0.0);

struct RomMeasure {
  double value_deg = 0.0;
  std::string joint;
};

// Peak-to-peak of the finite samples.
template <typename Derived>
RomMeasure rom(const Eigen::ArrayBase<Derived>& trace, std::string joint = "elbow") {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < trace.size(); ++i) {
    const double v = static_cast<double>(trace[i]);
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi >= lo)) throw ValidationError("angle trace has no finite samples");
  return {hi - lo, std::move(joint)};
}

struct RepCount {
  int count = 0;
  double rate_per_min = 0.0;
  double refractory_s = 0.3;
  double duration_s = 0.0;
};

// Upward crossings of the trace mean, ignoring any within `refractory_s` of the
// previous counted one. Crossings are only taken between adjacent finite samples.
template <typename Derived>
RepCount count_reps(const Eigen::ArrayBase<Derived>& trace, double rate_hz, double refractory_s = 0.3) {
  if (!(rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
  if (refractory_s < 0.0) throw ValidationError("refractory period must be >= 0");
  RepCount out;
  out.refractory_s = refractory_s;
  out.duration_s = static_cast<double>(trace.size()) / rate_hz;
  if (out.duration_s < 2.0 * refractory_s || trace.size() < 2)
    throw ValidationError("trace shorter than two refractory periods");
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < trace.size(); ++i) {
    const double v = static_cast<double>(trace[i]);
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw ValidationError("angle trace has no finite samples");
  const double mean = sum / static_cast<double>(n);
  double last = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < trace.size(); ++i) {
    const double a = static_cast<double>(trace[i - 1]), b = static_cast<double>(trace[i]);
    if (!std::isfinite(a) || !std::isfinite(b)) continue;
    if (a < mean && b >= mean) {
      const double t = static_cast<double>(i) / rate_hz;
      if (t - last >= refractory_s) {
        ++out.count;
        last = t;
      }
    }
  }
  out.rate_per_min = out.count / (out.duration_s / 60.0);
  return out;
}

struct FatigueTrend {
  double slope_hz_per_min = 0.0;
  double intercept_hz = 0.0;
  std::size_t n_windows = 0;
  std::string fit_method = "theil_sen";
};

// Theil-Sen fit of median frequency against window time (seconds).
FatigueTrend fatigue_slope(const Eigen::Ref<const Eigen::ArrayXd>& times_s,
                           const Eigen::Ref<const Eigen::ArrayXd>& freqs_hz);

struct OutcomeOptions {
  PipelineConfig pipeline;
  double refractory_s = 0.3;
  bool exclude_flagged_windows = true;
};

// Angle smoothing shared by the outcome computation and the live loop.
Eigen::ArrayXd smooth_trace(const Eigen::Ref<const Eigen::ArrayXd>& trace);

// All features for one session in a single pass. Requires a record that passed QC.
SessionOutcomes session_outcomes(const SessionRecord& record, const OutcomeOptions& options = {});

// Window-level features for a record, as the pipeline emits them.
std::vector<WindowFeatures> session_windows(const SessionRecord& record, const PipelineConfig& config);

}  // namespace armassist::metrics
