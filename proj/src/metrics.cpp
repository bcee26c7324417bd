#include "armassist/metrics.hpp"

#include <algorithm>
#include <set>

#include "armassist/session.hpp"

namespace armassist::metrics {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) throw InsufficientDataError("median of an empty set");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

}  // namespace

TremorIndex tremor_index(const dsp::PsdEstimate& psd, double window_start_s) {
  TremorIndex ti;
  ti.window_start_s = window_start_s;
  if (psd.freqs_hz.size() < 2 || psd.freqs_hz[psd.freqs_hz.size() - 1] < ti.ref_high_hz)
    throw ValidationError("PSD must extend to 20 Hz for the tremor index");
  const double ref = dsp::band_power(psd, ti.ref_low_hz, ti.ref_high_hz);
  if (!(ref > 0.0)) throw NoMotionError("no power in the 0.5-20 Hz reference band");
  ti.value = dsp::band_power(psd, ti.band_low_hz, ti.band_high_hz) / ref;
  return ti;
}

FatigueTrend fatigue_slope(const Eigen::Ref<const Eigen::ArrayXd>& times_s,
                           const Eigen::Ref<const Eigen::ArrayXd>& freqs_hz) {
  if (times_s.size() != freqs_hz.size()) throw ValidationError("time and frequency series differ in length");
  const Eigen::Index n = times_s.size();
  if (n < 2) throw InsufficientDataError("fatigue trend needs at least two windows");
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dt = times_s[j] - times_s[i];
      if (dt != 0.0) slopes.push_back((freqs_hz[j] - freqs_hz[i]) / dt);
    }
  }
  if (slopes.empty()) throw ValidationError("all windows share one timestamp");
  FatigueTrend out;
  const double per_s = median_of(std::move(slopes));
  std::vector<double> resid(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) resid[static_cast<std::size_t>(i)] = freqs_hz[i] - per_s * times_s[i];
  out.slope_hz_per_min = per_s * 60.0;
  out.intercept_hz = median_of(std::move(resid));
  out.n_windows = static_cast<std::size_t>(n);
  return out;
}

Eigen::ArrayXd smooth_trace(const Eigen::Ref<const Eigen::ArrayXd>& trace) {
  dsp::MovingMedian<double> median(5);
  dsp::SavitzkyGolay<double> savgol(9, 3);
  Eigen::ArrayXd out(trace.size());
  bool gap = false;
  for (Eigen::Index i = 0; i < trace.size(); ++i) {
    if (!std::isfinite(trace[i])) {
      if (!gap) {
        median.reset();
        savgol.reset();
      }
      gap = true;
      out[i] = trace[i];
      continue;
    }
    gap = false;
    out[i] = savgol.step(median.step(trace[i]));
  }
  return out;
}

std::vector<WindowFeatures> session_windows(const SessionRecord& record, const PipelineConfig& config) {
  const auto view = session::synchronize(record.channels);
  const auto& emg = view.channel(primary_emg(record.task.kind));
  const auto& accel = view.channel(ChannelKind::imu_accel);
  PipelineConfig cfg = config;
  cfg.emg_rate_hz = emg.config.sample_rate_hz;
  cfg.accel_rate_hz = accel.config.sample_rate_hz;
  FeaturePipeline pipeline(cfg);
  auto windows = pipeline.push(emg.values, accel.values);
  auto tail = pipeline.finish();
  windows.insert(windows.end(), tail.begin(), tail.end());
  return windows;
}

SessionOutcomes session_outcomes(const SessionRecord& record, const OutcomeOptions& options) {
  if (record.qc.excluded) throw ValidationError("session was excluded by QC: " + record.qc.exclusion_reason);
  PipelineConfig cfg = options.pipeline;
  cfg.strict = true;
  const auto windows = session_windows(record, cfg);
  std::set<std::size_t> flagged;
  if (options.exclude_flagged_windows)
    flagged.insert(record.qc.outlier_window_indices.begin(), record.qc.outlier_window_indices.end());

  const double half_window = 0.125;
  std::vector<double> ti, t, fmed;
  for (const auto& w : windows) {
    if (flagged.count(w.index)) continue;
    if (w.ti) ti.push_back(*w.ti);
    if (w.median_freq_hz) {
      t.push_back(w.start_s + half_window);
      fmed.push_back(*w.median_freq_hz);
    }
  }
  if (ti.empty()) throw InsufficientDataError("no window produced a tremor index");

  SessionOutcomes out;
  out.n_windows = windows.size();
  out.n_ti_windows = ti.size();
  out.ti_median = median_of(ti);
  const auto trend = fatigue_slope(Eigen::Map<const Eigen::ArrayXd>(t.data(), static_cast<Eigen::Index>(t.size())),
                                   Eigen::Map<const Eigen::ArrayXd>(fmed.data(), static_cast<Eigen::Index>(fmed.size())));
  out.fmed_slope_hz_per_min = trend.slope_hz_per_min;

  const auto view = session::synchronize(record.channels);
  const auto& angle = view.channel(ChannelKind::joint_angle);
  const Eigen::ArrayXd smooth = smooth_trace(angle.values);
  out.rom_deg = rom(smooth).value_deg;
  const auto reps = count_reps(smooth, angle.config.sample_rate_hz, options.refractory_s);
  out.reps_per_min = reps.rate_per_min;
  out.rep_count = reps.count;
  return out;
}

}  // namespace armassist::metrics
