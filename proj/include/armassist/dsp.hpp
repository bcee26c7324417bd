#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "armassist/errors.hpp"

namespace armassist::dsp {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// Normalized second-order section, a0 == 1.
template <typename Scalar = double>
struct Biquad {
  Scalar b0{1}, b1{0}, b2{0}, a1{0}, a2{0};

  template <typename Other>
  Biquad<Other> cast() const {
    return {static_cast<Other>(b0), static_cast<Other>(b1), static_cast<Other>(b2), static_cast<Other>(a1),
            static_cast<Other>(a2)};
  }
};

using Sos = std::vector<Biquad<double>>;

// Digital Butterworth designs through the bilinear transform with prewarped edges.
// For band-pass, `order` is the prototype order, so the filter has 2*order poles.
Sos butterworth_bandpass(int order, double low_hz, double high_hz, double rate_hz);
Sos butterworth_lowpass(int order, double cutoff_hz, double rate_hz);
Sos butterworth_highpass(int order, double cutoff_hz, double rate_hz);
Biquad<double> iir_notch(double notch_hz, double quality, double rate_hz);

std::complex<double> sos_response(const Sos& sos, double freq_hz, double rate_hz);
double sos_group_delay(const Sos& sos, double freq_hz, double rate_hz);  // in samples

// Cascade of biquads in transposed direct form II; state persists across calls.
template <typename Scalar = double>
class SosFilter {
 public:
  SosFilter() = default;
  explicit SosFilter(const Sos& sos) {
    sections_.reserve(sos.size());
    for (const auto& s : sos) sections_.push_back(s.template cast<Scalar>());
    state_.assign(sections_.size(), {Scalar(0), Scalar(0)});
  }

  Scalar step(Scalar x) {
    for (std::size_t i = 0; i < sections_.size(); ++i) {
      const auto& s = sections_[i];
      auto& z = state_[i];
      const Scalar y = s.b0 * x + z[0];
      z[0] = s.b1 * x - s.a1 * y + z[1];
      z[1] = s.b2 * x - s.a2 * y;
      x = y;
    }
    return x;
  }

  template <typename Derived>
  ArrayX<Scalar> process(const Eigen::ArrayBase<Derived>& x) {
    ArrayX<Scalar> y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = step(static_cast<Scalar>(x[i]));
    return y;
  }

  void reset() { std::fill(state_.begin(), state_.end(), std::array<Scalar, 2>{Scalar(0), Scalar(0)}); }
  const std::vector<Biquad<Scalar>>& sections() const { return sections_; }

 private:
  std::vector<Biquad<Scalar>> sections_;
  std::vector<std::array<Scalar, 2>> state_;
};

// Causal running median over the last `length` samples. Output lags the input
// by (length-1)/2 samples; during warm-up the lagged input passes through.
template <typename Scalar = double>
class MovingMedian {
 public:
  MovingMedian() : MovingMedian(5) {}
  explicit MovingMedian(int length) : length_(length) {
    if (length < 1 || length % 2 == 0) throw ValidationError("median length must be odd and positive");
    history_.reserve(length);
  }

  Scalar step(Scalar x) {
    if (static_cast<int>(history_.size()) < length_) {
      history_.push_back(x);
    } else {
      history_[head_] = x;
      head_ = (head_ + 1) % length_;
    }
    ++count_;
    const int half = (length_ - 1) / 2;
    if (count_ < length_) return history_[static_cast<std::size_t>(std::max<long>(0, count_ - 1 - half))];
    scratch_.assign(history_.begin(), history_.end());
    std::nth_element(scratch_.begin(), scratch_.begin() + half, scratch_.end());
    return scratch_[half];
  }

  template <typename Derived>
  ArrayX<Scalar> process(const Eigen::ArrayBase<Derived>& x) {
    ArrayX<Scalar> y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = step(static_cast<Scalar>(x[i]));
    return y;
  }

  void reset() {
    history_.clear();
    head_ = 0;
    count_ = 0;
  }
  int delay() const { return (length_ - 1) / 2; }

 private:
  int length_;
  std::vector<Scalar> history_;
  std::vector<Scalar> scratch_;
  int head_ = 0;
  long count_ = 0;
};

// Least-squares smoothing weights for the centre point of a window of odd length.
template <typename Scalar = double>
ArrayX<Scalar> savgol_coefficients(int length, int poly_order) {
  if (length < 1 || length % 2 == 0) throw ValidationError("Savitzky-Golay window must be odd and positive");
  if (poly_order < 0 || poly_order >= length) throw ValidationError("polynomial order must be below window length");
  const int half = (length - 1) / 2;
  Eigen::MatrixXd vander(length, poly_order + 1);
  for (int i = 0; i < length; ++i)
    for (int j = 0; j <= poly_order; ++j) vander(i, j) = std::pow(static_cast<double>(i - half), j);
  Eigen::VectorXd e0 = Eigen::VectorXd::Unit(poly_order + 1, 0);
  const Eigen::VectorXd weights = vander * (vander.transpose() * vander).ldlt().solve(e0);
  return weights.array().template cast<Scalar>();
}

// Causal FIR form of the Savitzky-Golay smoother, lagging by (length-1)/2 samples.
template <typename Scalar = double>
class SavitzkyGolay {
 public:
  SavitzkyGolay() : SavitzkyGolay(9, 3) {}
  SavitzkyGolay(int length, int poly_order)
      : coeffs_(savgol_coefficients<Scalar>(length, poly_order)), history_(ArrayX<Scalar>::Zero(length)) {}

  Scalar step(Scalar x) {
    const Eigen::Index n = coeffs_.size();
    history_.head(n - 1) = history_.tail(n - 1).eval();
    history_[n - 1] = x;
    ++count_;
    const Eigen::Index half = (n - 1) / 2;
    if (count_ < n) return history_[std::max<Eigen::Index>(n - count_, n - 1 - half)];
    return (coeffs_ * history_).sum();
  }

  template <typename Derived>
  ArrayX<Scalar> process(const Eigen::ArrayBase<Derived>& x) {
    ArrayX<Scalar> y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = step(static_cast<Scalar>(x[i]));
    return y;
  }

  void reset() {
    history_.setZero();
    count_ = 0;
  }
  int delay() const { return static_cast<int>((coeffs_.size() - 1) / 2); }
  const ArrayX<Scalar>& coefficients() const { return coeffs_; }

 private:
  ArrayX<Scalar> coeffs_;
  ArrayX<Scalar> history_;
  Eigen::Index count_ = 0;
};

enum class FilterKind { bandpass_iir, notch_iir, moving_median, savitzky_golay };

struct FilterSpec {
  FilterKind kind = FilterKind::bandpass_iir;
  int order = 4;
  double low_hz = 20.0;
  double high_hz = 450.0;
  double notch_hz = 50.0;
  double quality = 30.0;
  int window_len = 5;
  int poly_order = 3;

  static FilterSpec emg_bandpass() { return {}; }
  static FilterSpec mains_notch(double mains_hz) {
    FilterSpec s;
    s.kind = FilterKind::notch_iir;
    s.notch_hz = mains_hz;
    return s;
  }
  static FilterSpec median(int length = 5) {
    FilterSpec s;
    s.kind = FilterKind::moving_median;
    s.window_len = length;
    return s;
  }
  static FilterSpec savgol(int length = 9, int order = 3) {
    FilterSpec s;
    s.kind = FilterKind::savitzky_golay;
    s.window_len = length;
    s.poly_order = order;
    return s;
  }

  void validate(double rate_hz) const;
};

// A FilterSpec bound to a sample rate, with state kept between chunks.
template <typename Scalar = double>
class StreamFilter {
 public:
  StreamFilter(const FilterSpec& spec, double rate_hz) {
    spec.validate(rate_hz);
    switch (spec.kind) {
      case FilterKind::bandpass_iir:
        impl_ = SosFilter<Scalar>(butterworth_bandpass(spec.order, spec.low_hz, spec.high_hz, rate_hz));
        break;
      case FilterKind::notch_iir:
        impl_ = SosFilter<Scalar>(Sos{iir_notch(spec.notch_hz, spec.quality, rate_hz)});
        break;
      case FilterKind::moving_median:
        impl_ = MovingMedian<Scalar>(spec.window_len);
        break;
      case FilterKind::savitzky_golay:
        impl_ = SavitzkyGolay<Scalar>(spec.window_len, spec.poly_order);
        break;
    }
  }

  Scalar step(Scalar x) {
    return std::visit([x](auto& f) { return f.step(x); }, impl_);
  }
  template <typename Derived>
  ArrayX<Scalar> process(const Eigen::ArrayBase<Derived>& x) {
    return std::visit([&x](auto& f) { return f.process(x); }, impl_);
  }
  void reset() {
    std::visit([](auto& f) { f.reset(); }, impl_);
  }

 private:
  std::variant<SosFilter<Scalar>, MovingMedian<Scalar>, SavitzkyGolay<Scalar>> impl_;
};

template <typename Derived>
ArrayX<typename Derived::Scalar> filter_stream(const FilterSpec& spec, const Eigen::ArrayBase<Derived>& samples,
                                               double rate_hz) {
  StreamFilter<typename Derived::Scalar> f(spec, rate_hz);
  return f.process(samples);
}

template <typename Scalar = double>
struct Window {
  double start_s = 0.0;
  double sample_rate_hz = 0.0;
  ArrayX<Scalar> samples;
};

struct WindowGeometry {
  Eigen::Index length = 0;
  Eigen::Index hop = 0;
};

// 250 ms windows with 50% overlap at the given rate.
inline WindowGeometry analysis_geometry(double rate_hz) {
  return {static_cast<Eigen::Index>(std::floor(0.25 * rate_hz + 1e-9)),
          static_cast<Eigen::Index>(std::floor(0.125 * rate_hz + 1e-9))};
}

// Consecutive windows; a trailing partial window is dropped.
template <typename Derived>
std::vector<Window<typename Derived::Scalar>> windowize(const Eigen::ArrayBase<Derived>& samples, double rate_hz,
                                                        double start_s = 0.0) {
  if (!(rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
  const auto geom = analysis_geometry(rate_hz);
  if (geom.length < 1 || geom.hop < 1) throw ValidationError("sample rate too low for 250 ms windows");
  std::vector<Window<typename Derived::Scalar>> out;
  for (Eigen::Index s = 0; s + geom.length <= samples.size(); s += geom.hop) {
    out.push_back({start_s + static_cast<double>(s) / rate_hz, rate_hz, samples.segment(s, geom.length)});
  }
  return out;
}

enum class Taper { hann };
enum class Detrend { none, constant };

struct PsdEstimate {
  Eigen::ArrayXd freqs_hz;
  Eigen::ArrayXd power;  // one-sided density, units^2/Hz
  int segment_len = 0;
  double overlap_frac = 0.5;
  Taper taper = Taper::hann;
  double sample_rate_hz = 0.0;
  int n_segments = 0;
};

// Welch estimate from Hann-tapered segments. Segments containing non-finite
// samples are skipped; throws if none remain.
PsdEstimate welch_psd(const Eigen::Ref<const Eigen::ArrayXd>& samples, double rate_hz, int segment_len,
                      double overlap_frac = 0.5, Detrend detrend = Detrend::constant);

template <typename Derived>
PsdEstimate welch_psd(const Eigen::ArrayBase<Derived>& samples, double rate_hz, int segment_len,
                      double overlap_frac = 0.5, Detrend detrend = Detrend::constant) {
  const Eigen::ArrayXd x = samples.template cast<double>();
  return welch_psd(Eigen::Ref<const Eigen::ArrayXd>(x), rate_hz, segment_len, overlap_frac, detrend);
}

// Trapezoid integral of the PSD over [low, high] with linearly interpolated edges.
double band_power(const PsdEstimate& psd, double low_hz, double high_hz);

// Frequency where cumulative in-band power reaches half the band total.
double median_frequency(const PsdEstimate& psd, double low_hz = 20.0, double high_hz = 450.0);

struct EmgFeatures {
  double rms = 0.0;
  double mav = 0.0;
  int zc = 0;
};

// Zero crossings only count once the signal has travelled past +/-hysteresis
// on the opposite side of the last counted crossing. Without an explicit
// threshold, 5% of the window RMS is used.
template <typename Derived>
EmgFeatures emg_features(const Eigen::ArrayBase<Derived>& x, std::optional<double> hysteresis = std::nullopt) {
  if (x.size() == 0) throw ValidationError("empty window");
  EmgFeatures f;
  f.rms = std::sqrt(static_cast<double>(x.square().mean()));
  f.mav = static_cast<double>(x.abs().mean());
  const double h = hysteresis ? *hysteresis : 0.05 * f.rms;
  if (h < 0.0) throw ValidationError("hysteresis must be >= 0");
  int side = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = static_cast<double>(x[i]);
    int now = 0;
    if (v > h) now = 1;
    else if (v < -h) now = -1;
    if (now == 0) continue;
    if (side != 0 && now != side) ++f.zc;
    side = now;
  }
  return f;
}

}  // namespace armassist::dsp
