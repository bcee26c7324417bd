#include "armassist/dsp.hpp"

#include <numbers>

#include <unsupported/Eigen/FFT>

namespace armassist::dsp {

namespace {

using cplx = std::complex<double>;

struct Zpk {
  std::vector<cplx> zeros;
  std::vector<cplx> poles;
  double gain = 1.0;
};

std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> p;
  for (int m = -order + 1; m < order; m += 2) {
    p.push_back(-std::exp(cplx(0.0, std::numbers::pi * m / (2.0 * order))));
  }
  return p;
}

double prewarp(double hz, double rate_hz) { return 2.0 * rate_hz * std::tan(std::numbers::pi * hz / rate_hz); }

Zpk bilinear(const Zpk& analog, double rate_hz) {
  const double fs2 = 2.0 * rate_hz;
  Zpk d;
  cplx num(1.0), den(1.0);
  for (auto z : analog.zeros) {
    d.zeros.push_back((fs2 + z) / (fs2 - z));
    num *= fs2 - z;
  }
  for (auto p : analog.poles) {
    d.poles.push_back((fs2 + p) / (fs2 - p));
    den *= fs2 - p;
  }
  while (d.zeros.size() < d.poles.size()) d.zeros.push_back(-1.0);
  d.gain = analog.gain * (num / den).real();
  return d;
}

// Pairs conjugate poles into sections; zeros of these designs are all real.
Sos zpk_to_sos(Zpk zpk) {
  std::vector<cplx> upper, reals;
  for (auto p : zpk.poles) {
    if (std::abs(p.imag()) < 1e-12) reals.push_back(p.real());
    else if (p.imag() > 0) upper.push_back(p);
  }
  std::vector<std::pair<cplx, cplx>> pole_pairs;
  for (auto p : upper) pole_pairs.push_back({p, std::conj(p)});
  std::sort(reals.begin(), reals.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
  for (std::size_t i = 0; i < reals.size(); i += 2) {
    pole_pairs.push_back({reals[i], i + 1 < reals.size() ? reals[i + 1] : cplx(0.0)});
  }
  std::vector<double> zeros;
  for (auto z : zpk.zeros) zeros.push_back(z.real());
  std::sort(zeros.begin(), zeros.end());
  Sos sos;
  for (const auto& [p1, p2] : pole_pairs) {
    Biquad<double> s;
    s.b1 = s.b2 = 0.0;
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    sos.push_back(s);
  }
  // Zeros go in (lowest, highest) pairs, so band-pass sections get one at each of z = +1 and -1.
  std::size_t lo = 0, hi = zeros.size();
  for (auto& s : sos) {
    std::vector<double> zs;
    if (lo < hi) zs.push_back(zeros[lo++]);
    if (lo < hi) zs.push_back(zeros[--hi]);
    if (zs.size() == 2) {
      s.b0 = 1.0;
      s.b1 = -(zs[0] + zs[1]);
      s.b2 = zs[0] * zs[1];
    } else if (zs.size() == 1) {
      s.b0 = 1.0;
      s.b1 = -zs[0];
      s.b2 = 0.0;
    }
  }
  sos.front().b0 *= zpk.gain;
  sos.front().b1 *= zpk.gain;
  sos.front().b2 *= zpk.gain;
  return sos;
}

void check_edge(double hz, double rate_hz, const char* what) {
  if (!(rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
  if (!(hz > 0.0) || hz >= rate_hz / 2.0)
    throw ValidationError(std::string(what) + " must lie strictly between 0 and Nyquist");
}

void check_order(int order) {
  if (order < 1 || order > 12) throw ValidationError("filter order must be 1..12");
}

cplx poly_at(double c0, double c1, double c2, cplx zinv) { return c0 + zinv * (c1 + zinv * c2); }

}  // namespace

Sos butterworth_bandpass(int order, double low_hz, double high_hz, double rate_hz) {
  check_order(order);
  check_edge(low_hz, rate_hz, "low band edge");
  check_edge(high_hz, rate_hz, "high band edge");
  if (!(low_hz < high_hz)) throw ValidationError("band edges must satisfy low < high");
  const double w1 = prewarp(low_hz, rate_hz), w2 = prewarp(high_hz, rate_hz);
  const double bw = w2 - w1, w0 = std::sqrt(w1 * w2);
  Zpk analog;
  for (auto p : prototype_poles(order)) {
    const cplx ps = p * bw / 2.0;
    const cplx root = std::sqrt(ps * ps - w0 * w0);
    analog.poles.push_back(ps + root);
    analog.poles.push_back(ps - root);
  }
  analog.zeros.assign(order, 0.0);
  analog.gain = std::pow(bw, order);
  return zpk_to_sos(bilinear(analog, rate_hz));
}

Sos butterworth_lowpass(int order, double cutoff_hz, double rate_hz) {
  check_order(order);
  check_edge(cutoff_hz, rate_hz, "cutoff");
  const double w = prewarp(cutoff_hz, rate_hz);
  Zpk analog;
  for (auto p : prototype_poles(order)) analog.poles.push_back(p * w);
  analog.gain = std::pow(w, order);
  return zpk_to_sos(bilinear(analog, rate_hz));
}

Sos butterworth_highpass(int order, double cutoff_hz, double rate_hz) {
  check_order(order);
  check_edge(cutoff_hz, rate_hz, "cutoff");
  const double w = prewarp(cutoff_hz, rate_hz);
  Zpk analog;
  cplx prod(1.0);
  for (auto p : prototype_poles(order)) {
    analog.poles.push_back(w / p);
    prod *= -p;
  }
  analog.zeros.assign(order, 0.0);
  analog.gain = (1.0 / prod).real();
  return zpk_to_sos(bilinear(analog, rate_hz));
}

Biquad<double> iir_notch(double notch_hz, double quality, double rate_hz) {
  check_edge(notch_hz, rate_hz, "notch frequency");
  if (!(quality > 0.0)) throw ValidationError("notch quality must be positive");
  const double w0 = 2.0 * std::numbers::pi * notch_hz / rate_hz;
  const double bw = w0 / quality;
  const double g = 1.0 / (1.0 + std::tan(bw / 2.0));
  const double c = std::cos(w0);
  return {g, -2.0 * g * c, g, -2.0 * g * c, 2.0 * g - 1.0};
}

std::complex<double> sos_response(const Sos& sos, double freq_hz, double rate_hz) {
  const cplx zinv = std::exp(cplx(0.0, -2.0 * std::numbers::pi * freq_hz / rate_hz));
  cplx h(1.0);
  for (const auto& s : sos) h *= poly_at(s.b0, s.b1, s.b2, zinv) / poly_at(1.0, s.a1, s.a2, zinv);
  return h;
}

double sos_group_delay(const Sos& sos, double freq_hz, double rate_hz) {
  // For a polynomial c(z^-1): delay = Re( sum k c_k z^-k / sum c_k z^-k ).
  const cplx zinv = std::exp(cplx(0.0, -2.0 * std::numbers::pi * freq_hz / rate_hz));
  auto poly_delay = [&](double c0, double c1, double c2) {
    const cplx num = zinv * (c1 + 2.0 * c2 * zinv);
    return (num / poly_at(c0, c1, c2, zinv)).real();
  };
  double d = 0.0;
  for (const auto& s : sos) d += poly_delay(s.b0, s.b1, s.b2) - poly_delay(1.0, s.a1, s.a2);
  return d;
}

void FilterSpec::validate(double rate_hz) const {
  if (!(rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
  switch (kind) {
    case FilterKind::bandpass_iir:
      check_order(order);
      check_edge(low_hz, rate_hz, "low band edge");
      check_edge(high_hz, rate_hz, "high band edge");
      if (!(low_hz < high_hz)) throw ValidationError("band edges must satisfy low < high");
      break;
    case FilterKind::notch_iir:
      check_edge(notch_hz, rate_hz, "notch frequency");
      if (!(quality > 0.0)) throw ValidationError("notch quality must be positive");
      break;
    case FilterKind::moving_median:
      if (window_len < 1 || window_len % 2 == 0) throw ValidationError("median length must be odd and positive");
      break;
    case FilterKind::savitzky_golay:
      if (window_len < 1 || window_len % 2 == 0)
        throw ValidationError("Savitzky-Golay window must be odd and positive");
      if (poly_order < 0 || poly_order >= window_len)
        throw ValidationError("polynomial order must be below window length");
      break;
  }
}

PsdEstimate welch_psd(const Eigen::Ref<const Eigen::ArrayXd>& samples, double rate_hz, int segment_len,
                      double overlap_frac, Detrend detrend) {
  if (!(rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
  if (segment_len < 2) throw ValidationError("segment length must be at least 2");
  if (!(overlap_frac >= 0.0 && overlap_frac < 1.0)) throw ValidationError("overlap must be in [0, 1)");
  if (samples.size() < segment_len) throw ValidationError("fewer samples than one segment");

  const int n = segment_len;
  const int hop = n - static_cast<int>(std::floor(n * overlap_frac));
  Eigen::ArrayXd taper(n);
  for (int i = 0; i < n; ++i) taper[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  const double scale = 1.0 / (rate_hz * taper.square().sum());

  const int bins = n / 2 + 1;
  PsdEstimate psd;
  psd.segment_len = n;
  psd.overlap_frac = overlap_frac;
  psd.sample_rate_hz = rate_hz;
  psd.freqs_hz = Eigen::ArrayXd::LinSpaced(bins, 0.0, (bins - 1) * rate_hz / n);
  psd.power = Eigen::ArrayXd::Zero(bins);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> seg(n);
  std::vector<cplx> spec;
  for (Eigen::Index start = 0; start + n <= samples.size(); start += hop) {
    auto x = samples.segment(start, n);
    if (!x.allFinite()) continue;
    const double mean = detrend == Detrend::constant ? x.mean() : 0.0;
    for (int i = 0; i < n; ++i) seg[i] = (x[i] - mean) * taper[i];
    fft.fwd(spec, seg);
    for (int k = 0; k < bins; ++k) psd.power[k] += std::norm(spec[k]);
    ++psd.n_segments;
  }
  if (psd.n_segments == 0) throw InsufficientDataError("no complete segment without gaps");
  psd.power *= scale / psd.n_segments;
  const int last_doubled = (n % 2 == 0) ? bins - 2 : bins - 1;
  psd.power.segment(1, last_doubled) *= 2.0;
  return psd;
}

namespace {

double interp_power(const PsdEstimate& psd, double f) {
  const double df = psd.freqs_hz[1] - psd.freqs_hz[0];
  const double pos = (f - psd.freqs_hz[0]) / df;
  const Eigen::Index i = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), 0,
                                                  psd.freqs_hz.size() - 2);
  const double t = pos - static_cast<double>(i);
  return psd.power[i] + t * (psd.power[i + 1] - psd.power[i]);
}

// Piecewise-linear PSD restricted to [low, high] with interpolated end points.
void band_slice(const PsdEstimate& psd, double low_hz, double high_hz, std::vector<double>& f,
                std::vector<double>& p) {
  if (psd.freqs_hz.size() < 2) throw ValidationError("PSD needs at least two bins");
  if (!(low_hz < high_hz)) throw ValidationError("band edges must satisfy low < high");
  const double fmax = psd.freqs_hz[psd.freqs_hz.size() - 1];
  if (low_hz < psd.freqs_hz[0] || high_hz > fmax + 1e-9)
    throw ValidationError("band exceeds the PSD frequency range");
  f.clear();
  p.clear();
  f.push_back(low_hz);
  p.push_back(interp_power(psd, low_hz));
  for (Eigen::Index i = 0; i < psd.freqs_hz.size(); ++i) {
    if (psd.freqs_hz[i] > low_hz && psd.freqs_hz[i] < high_hz) {
      f.push_back(psd.freqs_hz[i]);
      p.push_back(psd.power[i]);
    }
  }
  f.push_back(high_hz);
  p.push_back(interp_power(psd, std::min(high_hz, fmax)));
}

}  // namespace

double band_power(const PsdEstimate& psd, double low_hz, double high_hz) {
  std::vector<double> f, p;
  band_slice(psd, low_hz, high_hz, f, p);
  double total = 0.0;
  for (std::size_t i = 1; i < f.size(); ++i) total += 0.5 * (p[i] + p[i - 1]) * (f[i] - f[i - 1]);
  return total;
}

double median_frequency(const PsdEstimate& psd, double low_hz, double high_hz) {
  std::vector<double> f, p;
  band_slice(psd, low_hz, high_hz, f, p);
  std::vector<double> cum(f.size(), 0.0);
  for (std::size_t i = 1; i < f.size(); ++i) cum[i] = cum[i - 1] + 0.5 * (p[i] + p[i - 1]) * (f[i] - f[i - 1]);
  const double total = cum.back();
  if (!(total > 0.0)) throw DegenerateSpectrumError("no in-band power for median frequency");
  const double half = 0.5 * total;
  for (std::size_t i = 1; i < f.size(); ++i) {
    if (cum[i] >= half) {
      const double span = cum[i] - cum[i - 1];
      const double t = span > 0.0 ? (half - cum[i - 1]) / span : 0.0;
      return f[i - 1] + t * (f[i] - f[i - 1]);
    }
  }
  return f.back();
}

}  // namespace armassist::dsp
