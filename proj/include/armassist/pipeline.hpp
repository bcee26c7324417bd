#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "armassist/dsp.hpp"
#include "armassist/types.hpp"

namespace armassist {

struct PipelineConfig {
  double emg_rate_hz = 1000.0;
  double accel_rate_hz = 200.0;
  double mains_hz = 50.0;
  int emg_psd_segment = 100;
  // Tremor spectra come from a rolling accelerometer buffer, not the 250 ms window,
  // so that 0.5 Hz is resolvable.
  double ti_buffer_s = 8.0;
  double ti_segment_s = 2.0;
  // Strict mode rethrows spectral errors tagged with the window index; otherwise
  // the affected feature is left empty.
  bool strict = false;

  void validate() const;
};

// Streaming extractor shared by the control loop and offline analysis. Inputs are
// physical-unit samples with NaN marking lost data; filters restart after a gap
// and windows touching a gap produce no features.
class FeaturePipeline {
 public:
  explicit FeaturePipeline(const PipelineConfig& config = {});

  std::vector<WindowFeatures> push(const Eigen::Ref<const Eigen::ArrayXd>& emg,
                                   const Eigen::Ref<const Eigen::ArrayXd>& accel);
  // Emits windows still waiting for their tremor estimate.
  std::vector<WindowFeatures> finish();

  const PipelineConfig& config() const { return config_; }

 private:
  void ingest_accel(const Eigen::Ref<const Eigen::ArrayXd>& accel);
  void ingest_emg(const Eigen::Ref<const Eigen::ArrayXd>& emg);
  std::vector<WindowFeatures> drain(bool flush);

  PipelineConfig config_;
  dsp::WindowGeometry emg_geom_;
  dsp::WindowGeometry accel_geom_;
  dsp::SosFilter<double> bandpass_;
  dsp::SosFilter<double> notch_;
  dsp::MovingMedian<double> median_;
  dsp::SavitzkyGolay<double> savgol_;
  bool emg_in_gap_ = false;
  bool accel_in_gap_ = false;

  std::vector<double> emg_buf_;
  std::size_t emg_buf_origin_ = 0;
  std::size_t emg_total_ = 0;
  std::size_t next_emg_window_ = 0;

  std::vector<double> accel_buf_;
  std::size_t accel_buf_origin_ = 0;
  std::size_t accel_total_ = 0;
  std::size_t next_accel_window_ = 0;

  std::map<std::size_t, std::optional<double>> ti_;
  std::deque<WindowFeatures> pending_;
};

}  // namespace armassist
