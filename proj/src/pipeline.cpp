#include "armassist/pipeline.hpp"

#include <cmath>

#include "armassist/metrics.hpp"

namespace armassist {

namespace {

// Drops consumed samples once enough have accumulated to make the copy worthwhile.
void trim(std::vector<double>& buf, std::size_t& origin, std::size_t keep_from) {
  if (keep_from <= origin) return;
  const std::size_t drop = std::min(keep_from - origin, buf.size());
  if (drop < 4096 && drop < buf.size()) return;
  buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(drop));
  origin += drop;
}

Eigen::Map<const Eigen::ArrayXd> slice(const std::vector<double>& buf, std::size_t origin, std::size_t begin,
                                       std::size_t length) {
  return Eigen::Map<const Eigen::ArrayXd>(buf.data() + (begin - origin), static_cast<Eigen::Index>(length));
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(emg_rate_hz > 0.0) || !(accel_rate_hz > 0.0)) throw ValidationError("sample rates must be positive");
  const auto emg = dsp::analysis_geometry(emg_rate_hz);
  if (emg_psd_segment < 8 || emg_psd_segment > emg.length)
    throw ValidationError("EMG spectral segment must fit inside one analysis window");
  if (!(ti_segment_s > 0.0) || ti_buffer_s < ti_segment_s)
    throw ValidationError("tremor buffer must hold at least one spectral segment");
  if (ti_segment_s * accel_rate_hz < 40.0) throw ValidationError("tremor segment too short to resolve 0.5 Hz");
  if (accel_rate_hz < 40.0) throw ValidationError("accelerometer rate too low for the 20 Hz reference band");
}

FeaturePipeline::FeaturePipeline(const PipelineConfig& config)
    : config_(config),
      emg_geom_(dsp::analysis_geometry(config.emg_rate_hz)),
      accel_geom_(dsp::analysis_geometry(config.accel_rate_hz)),
      bandpass_(dsp::butterworth_bandpass(4, 20.0, 450.0, config.emg_rate_hz)),
      notch_(dsp::Sos{dsp::iir_notch(config.mains_hz, 30.0, config.emg_rate_hz)}),
      median_(5),
      savgol_(9, 3) {
  config_.validate();
}

void FeaturePipeline::ingest_accel(const Eigen::Ref<const Eigen::ArrayXd>& accel) {
  const auto buffer_len = static_cast<std::size_t>(std::lround(config_.ti_buffer_s * config_.accel_rate_hz));
  const int segment = static_cast<int>(std::lround(config_.ti_segment_s * config_.accel_rate_hz));
  const auto len = static_cast<std::size_t>(accel_geom_.length);
  const auto hop = static_cast<std::size_t>(accel_geom_.hop);
  for (Eigen::Index i = 0; i < accel.size(); ++i) {
    const double x = accel[i];
    if (!std::isfinite(x)) {
      if (!accel_in_gap_) {
        median_.reset();
        savgol_.reset();
        accel_in_gap_ = true;
      }
      accel_buf_.push_back(std::nan(""));
    } else {
      accel_in_gap_ = false;
      accel_buf_.push_back(savgol_.step(median_.step(x)));
    }
    ++accel_total_;
    while (next_accel_window_ * hop + len <= accel_total_) {
      const std::size_t k = next_accel_window_++;
      const std::size_t end = k * hop + len;
      std::optional<double> ti;
      if (end >= buffer_len) {
        try {
          const auto psd = dsp::welch_psd(slice(accel_buf_, accel_buf_origin_, end - buffer_len, buffer_len),
                                          config_.accel_rate_hz, segment, 0.5);
          ti = metrics::tremor_index(psd).value;
        } catch (const InsufficientDataError&) {
        } catch (const NoMotionError& e) {
          if (config_.strict) throw NoMotionError(e.what(), k);
        }
      }
      ti_[k] = ti;
    }
    const std::size_t next_end = next_accel_window_ * hop + len;
    trim(accel_buf_, accel_buf_origin_, next_end > buffer_len ? next_end - buffer_len : 0);
  }
}

void FeaturePipeline::ingest_emg(const Eigen::Ref<const Eigen::ArrayXd>& emg) {
  const auto len = static_cast<std::size_t>(emg_geom_.length);
  const auto hop = static_cast<std::size_t>(emg_geom_.hop);
  for (Eigen::Index i = 0; i < emg.size(); ++i) {
    const double x = emg[i];
    if (!std::isfinite(x)) {
      if (!emg_in_gap_) {
        bandpass_.reset();
        notch_.reset();
        emg_in_gap_ = true;
      }
      emg_buf_.push_back(std::nan(""));
    } else {
      emg_in_gap_ = false;
      emg_buf_.push_back(notch_.step(bandpass_.step(x)));
    }
    ++emg_total_;
    while (next_emg_window_ * hop + len <= emg_total_) {
      const std::size_t k = next_emg_window_++;
      const auto w = slice(emg_buf_, emg_buf_origin_, k * hop, len);
      if (!w.allFinite()) continue;
      WindowFeatures f;
      f.index = k;
      f.start_s = static_cast<double>(k * hop) / config_.emg_rate_hz;
      const auto feats = dsp::emg_features(w);
      f.rms = feats.rms;
      f.mav = feats.mav;
      f.zc = feats.zc;
      try {
        f.median_freq_hz =
            dsp::median_frequency(dsp::welch_psd(w, config_.emg_rate_hz, config_.emg_psd_segment, 0.5));
      } catch (const DegenerateSpectrumError& e) {
        if (config_.strict) throw DegenerateSpectrumError(e.what(), k);
      }
      pending_.push_back(f);
    }
    trim(emg_buf_, emg_buf_origin_, next_emg_window_ * hop);
  }
}

std::vector<WindowFeatures> FeaturePipeline::drain(bool flush) {
  std::vector<WindowFeatures> out;
  while (!pending_.empty()) {
    auto& f = pending_.front();
    auto it = ti_.find(f.index);
    if (it == ti_.end() && !flush) break;
    if (it != ti_.end()) f.ti = it->second;
    ti_.erase(ti_.begin(), ti_.upper_bound(f.index));
    out.push_back(f);
    pending_.pop_front();
  }
  if (flush) ti_.clear();
  return out;
}

std::vector<WindowFeatures> FeaturePipeline::push(const Eigen::Ref<const Eigen::ArrayXd>& emg,
                                                  const Eigen::Ref<const Eigen::ArrayXd>& accel) {
  ingest_accel(accel);
  ingest_emg(emg);
  return drain(false);
}

std::vector<WindowFeatures> FeaturePipeline::finish() { return drain(true); }

}  // namespace armassist
