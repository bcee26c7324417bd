#include "armassist/signalgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "armassist/errors.hpp"

namespace armassist::signalgen {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kQuartileZ = 0.6744897501960817;
constexpr double kAngleCenterDeg = 80.0;
constexpr double kAccelPower = 0.08;     // (m/s^2)^2 shared by tremor and voluntary motion
constexpr double kTremorDepth = 0.1;     // amplitude modulation over the movement cycle
constexpr double kEmgAmplitudeMv = 0.3;

// Motion interference sits on a 1.5 Hz grid outside the tremor band so it does
// not leak across the 4 and 12 Hz edges at 0.5 Hz resolution.
constexpr std::array<double, 7> kMotionTonesHz = {1.5, 3.0, 13.5, 15.0, 16.5, 18.0, 19.5};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

double inv_norm(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

std::vector<double> latin_hypercube(int n, std::mt19937_64& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> u(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double j = unit(rng);
    j = std::clamp(j, 1e-6, 1.0 - 1e-6);
    u[static_cast<std::size_t>(i)] = (perm[static_cast<std::size_t>(i)] + j) / n;
  }
  return u;
}

std::vector<double> draw(const Quantiles& q, int n, std::mt19937_64& rng) {
  std::vector<double> out;
  for (double u : latin_hypercube(n, rng)) out.push_back(q.at(u));
  return out;
}

void check_quantiles(const Quantiles& q, const char* name) {
  if (!(q.q1 <= q.median && q.median <= q.q3) || !std::isfinite(q.q1) || !std::isfinite(q.q3))
    throw ValidationError(std::string(name) + ": quartiles must satisfy q1 <= median <= q3");
}

// Second-order Butterworth low-pass via the bilinear transform.
struct LowpassCoeffs {
  double b0, b1, b2, a1, a2;
};

LowpassCoeffs lowpass2(double corner_hz, double rate_hz) {
  const double k = std::tan(kPi * corner_hz / rate_hz);
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k * k);
  const double b0 = k * k * norm;
  return {b0, 2.0 * b0, b0, 2.0 * (k * k - 1.0) * norm, (1.0 - std::numbers::sqrt2 * k + k * k) * norm};
}

LowpassCoeffs highpass2(double corner_hz, double rate_hz) {
  const double k = std::tan(kPi * corner_hz / rate_hz);
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k * k);
  return {norm, -2.0 * norm, norm, 2.0 * (k * k - 1.0) * norm, (1.0 - std::numbers::sqrt2 * k + k * k) * norm};
}

double power_gain(const LowpassCoeffs& c, double freq_hz, double rate_hz) {
  const std::complex<double> zi = std::exp(std::complex<double>(0.0, -2.0 * kPi * freq_hz / rate_hz));
  const auto num = c.b0 + zi * (c.b1 + zi * c.b2);
  const auto den = 1.0 + zi * (c.a1 + zi * c.a2);
  return std::norm(num / den);
}

struct Biquad {
  LowpassCoeffs c;
  double z1 = 0.0, z2 = 0.0;
  double step(double x) {
    const double y = c.b0 * x + z1;
    z1 = c.b1 * x - c.a1 * y + z2;
    z2 = c.b2 * x - c.a2 * y;
    return y;
  }
};

const EmgSourceModel& emg_model(double rate_hz) {
  static std::map<double, EmgSourceModel> cache;
  static std::mutex guard;
  std::lock_guard lock(guard);
  auto it = cache.find(rate_hz);
  if (it == cache.end()) it = cache.emplace(rate_hz, EmgSourceModel(rate_hz)).first;
  return it->second;
}

// Limb kinematics for one session.
class Motion {
 public:
  Motion(const SubjectProfile& p, const TaskSpec& task, Condition c)
      : cyclic_(task.cycle_rate_hz > 0.0),
        freq_hz_(p.reps_per_min(c) / 60.0),
        half_rom_(p.rom_deg(c) / 2.0),
        hold_(task.kind == TaskKind::reach_hold ? 1.5 : 0.0),
        perturbations_(task.perturbations) {
    switch (task.kind) {
      case TaskKind::push_extend: phase0_ = 0.0; break;
      case TaskKind::pinch_grip: phase0_ = 2.0 * kPi / 3.0; break;
      case TaskKind::reach_hold: phase0_ = 4.0 * kPi / 3.0; break;
    }
  }

  double phase(double t) const { return 2.0 * kPi * (cyclic_ ? freq_hz_ : 0.17) * t + phase0_; }

  // Normalised position in [-1, 1]; starts each cycle at the flexed end.
  double position(double t) const {
    if (!cyclic_) return 0.0;
    const double c = std::cos(phase(t));
    return hold_ > 0.0 ? -std::tanh(hold_ * c) / std::tanh(hold_) : -c;
  }

  double velocity(double t) const {  // d(position)/dt
    if (!cyclic_) return 0.0;
    const double ph = phase(t), w = 2.0 * kPi * freq_hz_;
    if (hold_ > 0.0) {
      const double sech = 1.0 / std::cosh(hold_ * std::cos(ph));
      return hold_ * std::sin(ph) * sech * sech / std::tanh(hold_) * w;
    }
    return std::sin(ph) * w;
  }

  double angle(double t) const { return kAngleCenterDeg + half_rom_ * position(t) + (cyclic_ ? 0.0 : 2.0 * bump(t)); }
  double angular_velocity(double t) const { return half_rom_ * velocity(t); }
  double bump(double t) const {
    double s = 0.0;
    for (const auto& p : perturbations_) {
      const double d = (t - p.time_s) / 0.25;
      s += p.magnitude * std::exp(-d * d);
    }
    return s;
  }

 private:
  bool cyclic_;
  double freq_hz_;
  double half_rom_;
  double hold_;
  double phase0_ = 0.0;
  std::vector<Perturbation> perturbations_;
};

std::vector<SamplePacket> packetize(ChannelKind kind, const ChannelConfig& cfg, const std::vector<double>& x) {
  std::vector<SamplePacket> out;
  const auto spp = static_cast<std::size_t>(cfg.samples_per_packet);
  const auto hi = cfg.max_count(), lo = cfg.min_count();
  for (std::size_t start = 0, seq = 0; start < x.size(); start += spp, ++seq) {
    SamplePacket pk;
    pk.channel = kind;
    pk.seq = seq;
    pk.hub_timestamp_s = static_cast<double>(start) / cfg.sample_rate_hz;
    const std::size_t end = std::min(x.size(), start + spp);
    pk.payload.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      const double c = std::round(x[i] / cfg.lsb);
      pk.payload.push_back(static_cast<std::int32_t>(std::clamp<double>(c, lo, hi)));
    }
    out.push_back(std::move(pk));
  }
  return out;
}

}  // namespace

double Quantiles::at(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw ValidationError("quantile level must be in (0, 1)");
  const double z = inv_norm(u);
  const double sigma = (z < 0.0 ? median - q1 : q3 - median) / kQuartileZ;
  return median + sigma * z;
}

void SubjectProfile::validate() const {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in(ti_baseline, 0.0, 1.0) || !in(ti_assisted, 0.0, 1.0)) throw ValidationError("tremor index must be in [0, 1]");
  if (!in(rom_baseline_deg, 0.0, 150.0) || !in(rom_assisted_deg, 0.0, 150.0))
    throw ValidationError("range of motion must be in [0, 150] deg");
  if (!in(reps_baseline_per_min, 0.5, 60.0) || !in(reps_assisted_per_min, 0.5, 60.0))
    throw ValidationError("repetition rate must be in [0.5, 60] per minute");
  if (!in(fmed_slope_baseline, -10.0, 10.0) || !in(fmed_slope_assisted, -10.0, 10.0))
    throw ValidationError("median-frequency slope must be within +/-10 Hz/min");
  if (!in(fmed_start_hz, 50.0, 150.0)) throw ValidationError("starting median frequency must be in [50, 150] Hz");
  if (!in(tremor_freq_hz, 4.5, 11.5)) throw ValidationError("tremor frequency must lie inside the 4-12 Hz band");
}

void CohortCalibration::validate() const {
  check_quantiles(ti_baseline, "ti_baseline");
  check_quantiles(ti_controlled_level, "ti_controlled_level");
  check_quantiles(ti_nonresponder_delta, "ti_nonresponder_delta");
  check_quantiles(rom_baseline_deg, "rom_baseline_deg");
  check_quantiles(rom_gain_pct, "rom_gain_pct");
  check_quantiles(reps_baseline_per_min, "reps_baseline_per_min");
  check_quantiles(reps_delta_per_min, "reps_delta_per_min");
  check_quantiles(fmed_slope_baseline, "fmed_slope_baseline");
  check_quantiles(fmed_slope_delta, "fmed_slope_delta");
  check_quantiles(fmed_start_hz, "fmed_start_hz");
  if (!(ti_responder_fraction >= 0.0 && ti_responder_fraction <= 1.0))
    throw ValidationError("ti_responder_fraction must be in [0, 1]");
  if (!(tremor_freq_low_hz >= 4.5 && tremor_freq_low_hz <= tremor_freq_high_hz && tremor_freq_high_hz <= 11.5))
    throw ValidationError("tremor frequency range must sit inside 4.5-11.5 Hz");
}

namespace {

using QuantileField = Quantiles CohortCalibration::*;
const std::vector<std::pair<std::string, QuantileField>>& quantile_fields() {
  static const std::vector<std::pair<std::string, QuantileField>> f = {
      {"ti_baseline", &CohortCalibration::ti_baseline},
      {"ti_controlled_level", &CohortCalibration::ti_controlled_level},
      {"ti_nonresponder_delta", &CohortCalibration::ti_nonresponder_delta},
      {"rom_baseline_deg", &CohortCalibration::rom_baseline_deg},
      {"rom_gain_pct", &CohortCalibration::rom_gain_pct},
      {"reps_baseline_per_min", &CohortCalibration::reps_baseline_per_min},
      {"reps_delta_per_min", &CohortCalibration::reps_delta_per_min},
      {"fmed_slope_baseline", &CohortCalibration::fmed_slope_baseline},
      {"fmed_slope_delta", &CohortCalibration::fmed_slope_delta},
      {"fmed_start_hz", &CohortCalibration::fmed_start_hz},
  };
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<double> parse_numbers(const std::string& key, const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ValidationError(key + ": '" + item + "' is not a number");
    v.push_back(x);
  }
  return v;
}

}  // namespace

std::string CohortCalibration::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "# median, q1, q3 unless noted\n";
  for (const auto& [key, field] : quantile_fields()) {
    const Quantiles& q = this->*field;
    out << key << " = " << q.median << ", " << q.q1 << ", " << q.q3 << "\n";
  }
  out << "ti_responder_fraction = " << ti_responder_fraction << "\n";
  out << "tremor_freq_hz = " << tremor_freq_low_hz << ", " << tremor_freq_high_hz << "  # uniform range\n";
  return out.str();
}

CohortCalibration CohortCalibration::parse(const std::string& text) {
  CohortCalibration c;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("calibration line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const auto values = parse_numbers(key, trim(line.substr(eq + 1)));
    bool known = false;
    for (const auto& [name, field] : quantile_fields()) {
      if (name != key) continue;
      if (values.size() != 3) throw ValidationError(key + ": expected median, q1, q3");
      c.*field = {values[0], values[1], values[2]};
      known = true;
    }
    if (key == "ti_responder_fraction") {
      if (values.size() != 1) throw ValidationError(key + ": expected one value");
      c.ti_responder_fraction = values[0];
      known = true;
    } else if (key == "tremor_freq_hz") {
      if (values.size() != 2) throw ValidationError(key + ": expected low, high");
      c.tremor_freq_low_hz = values[0];
      c.tremor_freq_high_hz = values[1];
      known = true;
    }
    if (!known) throw ValidationError("unknown calibration key '" + key + "'");
  }
  c.validate();
  return c;
}

CohortCalibration CohortCalibration::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read calibration file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<SubjectProfile> generate_cohort(int n, const CohortCalibration& cal, std::uint64_t seed) {
  if (n < 1) throw ValidationError("cohort size must be at least 1");
  cal.validate();
  std::mt19937_64 rng(mix({seed, 0xC0407ULL}));
  const auto ti_b = draw(cal.ti_baseline, n, rng);
  const auto rom_b = draw(cal.rom_baseline_deg, n, rng);
  const auto rom_g = draw(cal.rom_gain_pct, n, rng);
  const auto reps_b = draw(cal.reps_baseline_per_min, n, rng);
  const auto reps_d = draw(cal.reps_delta_per_min, n, rng);
  const auto slope_b = draw(cal.fmed_slope_baseline, n, rng);
  const auto slope_d = draw(cal.fmed_slope_delta, n, rng);
  const auto fmed0 = draw(cal.fmed_start_hz, n, rng);
  std::vector<double> tremor_f;
  for (double u : latin_hypercube(n, rng))
    tremor_f.push_back(cal.tremor_freq_low_hz + u * (cal.tremor_freq_high_hz - cal.tremor_freq_low_hz));

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return ti_b[static_cast<std::size_t>(a)] < ti_b[static_cast<std::size_t>(b)];
  });
  const int responders = static_cast<int>(std::lround(cal.ti_responder_fraction * n));
  const auto level = draw(cal.ti_controlled_level, std::max(responders, 1), rng);
  const auto delta = draw(cal.ti_nonresponder_delta, std::max(n - responders, 1), rng);
  std::vector<double> ti_a(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    const auto i = static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
    if (r < responders) ti_a[i] = std::min(level[static_cast<std::size_t>(r)], ti_b[i]);
    else ti_a[i] = ti_b[i] + delta[static_cast<std::size_t>(r - responders)];
  }

  const int width = n >= 100 ? 3 : 2;
  std::vector<SubjectProfile> out;
  for (int s = 0; s < n; ++s) {
    const auto i = static_cast<std::size_t>(s);
    SubjectProfile p;
    std::string num = std::to_string(s + 1);
    p.id = "S" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    p.ti_baseline = std::clamp(ti_b[i], 0.02, 0.98);
    p.ti_assisted = std::clamp(ti_a[i], 0.02, 0.98);
    p.rom_baseline_deg = std::clamp(rom_b[i], 10.0, 130.0);
    p.rom_assisted_deg = std::clamp(p.rom_baseline_deg * (1.0 + rom_g[i] / 100.0), 5.0, 140.0);
    p.reps_baseline_per_min = std::clamp(reps_b[i], 2.0, 40.0);
    p.reps_assisted_per_min = std::clamp(p.reps_baseline_per_min + reps_d[i], 2.0, 40.0);
    p.fmed_slope_baseline = slope_b[i];
    p.fmed_slope_assisted = slope_b[i] + slope_d[i];
    p.fmed_start_hz = std::clamp(fmed0[i], 60.0, 130.0);
    p.tremor_freq_hz = tremor_f[i];
    p.rng_seed = mix({seed, static_cast<std::uint64_t>(s)});
    p.validate();
    out.push_back(p);
  }
  return out;
}

const std::vector<ChannelKind>& default_channels() { return all_channel_kinds(); }

EmgSourceModel::EmgSourceModel(double rate_hz) : rate_hz_(rate_hz) {
  if (!(rate_hz >= 920.0)) throw ValidationError("EMG model needs a rate of at least 920 Hz");
  const double df = 0.25;
  const auto hp = highpass2(20.0, rate_hz);
  std::vector<double> freqs, hp_gain;
  for (double f = 0.0; f <= rate_hz / 2.0 + 1e-9; f += df) {
    freqs.push_back(f);
    hp_gain.push_back(power_gain(hp, f, rate_hz));
  }
  for (double fc = 30.0; fc <= 0.45 * rate_hz; fc += 0.5) {
    const auto lp = lowpass2(fc, rate_hz);
    std::vector<double> g(freqs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      g[i] = hp_gain[i] * power_gain(lp, freqs[i], rate_hz);
      if (i > 0) total += 0.5 * (g[i] + g[i - 1]) * df;
    }
    double band = 0.0;
    std::vector<double> cum(freqs.size(), 0.0);
    for (std::size_t i = 1; i < freqs.size(); ++i) {
      if (freqs[i] > 20.0 && freqs[i] <= 450.0) band += 0.5 * (g[i] + g[i - 1]) * df;
      cum[i] = band;
    }
    double median = 0.0;
    for (std::size_t i = 1; i < freqs.size(); ++i) {
      if (cum[i] >= band / 2.0) {
        const double t = (band / 2.0 - cum[i - 1]) / (cum[i] - cum[i - 1]);
        median = freqs[i - 1] + t * df;
        break;
      }
    }
    corners_.push_back(fc);
    medians_.push_back(median);
    powers_.push_back(total / (rate_hz / 2.0));
  }
}

namespace {
double interp(const std::vector<double>& x, const std::vector<double>& y, double v) {
  auto it = std::upper_bound(x.begin(), x.end(), v);
  const std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - x.begin()), 1, x.size() - 1);
  const double t = (v - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + t * (y[i] - y[i - 1]);
}
}  // namespace

double EmgSourceModel::median_for_corner(double corner_hz) const {
  if (corner_hz < corners_.front() || corner_hz > corners_.back())
    throw ValidationError("corner frequency outside the modelled range");
  return interp(corners_, medians_, corner_hz);
}

double EmgSourceModel::corner_for_median(double median_hz) const {
  if (median_hz < medians_.front() || median_hz > medians_.back())
    throw ValidationError("median frequency outside the modelled range");
  return interp(medians_, corners_, median_hz);
}

double EmgSourceModel::power_for_corner(double corner_hz) const {
  if (corner_hz < corners_.front() || corner_hz > corners_.back())
    throw ValidationError("corner frequency outside the modelled range");
  return interp(corners_, powers_, corner_hz);
}

SessionRecord generate_session(const SubjectProfile& profile, const TaskSpec& task, Condition condition,
                               const std::vector<ChannelKind>& channels, int trial) {
  profile.validate();
  task.validate();
  to_string(condition);
  std::set<ChannelKind> wanted;
  for (auto k : channels) {
    to_string(k);
    if (!wanted.insert(k).second) throw ValidationError("channel listed twice: " + std::string(to_string(k)));
  }
  if (!wanted.count(ChannelKind::imu_accel) || !wanted.count(ChannelKind::joint_angle))
    throw ValidationError("sessions need imu_accel and joint_angle channels");
  if (!wanted.count(ChannelKind::emg_triceps) && !wanted.count(ChannelKind::emg_epb))
    throw ValidationError("sessions need at least one EMG channel");

  SessionRecord rec;
  rec.subject_id = profile.id;
  rec.task = task;
  rec.condition = condition;
  rec.trial = trial;

  const Motion motion(profile, task, condition);
  auto stream_seed = [&](ChannelKind k, std::uint64_t tag) {
    return mix({profile.rng_seed, static_cast<std::uint64_t>(task.kind), static_cast<std::uint64_t>(trial),
                static_cast<std::uint64_t>(k), tag});
  };

  // Tremor parameters are shared between channels so accelerometer and gyro agree.
  std::mt19937_64 tremor_rng(stream_seed(ChannelKind::imu_accel, 7));
  std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * kPi);
  const double tremor_phase = angle_dist(tremor_rng);
  const double ti = profile.ti(condition);
  const double tremor_amp = std::sqrt(2.0 * ti * kAccelPower / (1.0 + kTremorDepth * kTremorDepth / 2.0));
  auto tremor = [&](double t) {
    return (1.0 + kTremorDepth * std::sin(motion.phase(t))) *
           std::sin(2.0 * kPi * profile.tremor_freq_hz * t + tremor_phase);
  };

  for (auto kind : wanted) {
    const ChannelConfig cfg = default_channel_config(kind);
    const double rate = cfg.sample_rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(task.duration_s * rate));
    std::vector<double> x(n);
    std::mt19937_64 rng(stream_seed(kind, 1));
    std::normal_distribution<double> gauss(0.0, 1.0);

    switch (kind) {
      case ChannelKind::joint_angle:
        for (std::size_t i = 0; i < n; ++i) x[i] = motion.angle(i / rate) + 0.03 * gauss(rng);
        break;
      case ChannelKind::imu_accel: {
        std::array<double, kMotionTonesHz.size()> amp{}, phase{};
        double power = 0.0;
        for (std::size_t j = 0; j < amp.size(); ++j) {
          amp[j] = 1.0 / kMotionTonesHz[j];
          phase[j] = angle_dist(rng);
          power += amp[j] * amp[j] / 2.0;
        }
        const double scale = std::sqrt((1.0 - ti) * kAccelPower / power);
        for (std::size_t i = 0; i < n; ++i) {
          const double t = i / rate;
          double v = 0.15 + tremor_amp * tremor(t);
          for (std::size_t j = 0; j < amp.size(); ++j)
            v += scale * amp[j] * std::sin(2.0 * kPi * kMotionTonesHz[j] * t + phase[j]);
          x[i] = v + 0.003 * gauss(rng);
        }
        break;
      }
      case ChannelKind::imu_gyro: {
        // Tremor acceleration at a 0.3 m lever arm, integrated to angular rate.
        const double rot = tremor_amp / 0.3 / (2.0 * kPi * profile.tremor_freq_hz) * 180.0 / kPi;
        for (std::size_t i = 0; i < n; ++i) {
          const double t = i / rate;
          x[i] = motion.angular_velocity(t) + rot * tremor(t - 0.25 / profile.tremor_freq_hz) + 0.2 * gauss(rng);
        }
        break;
      }
      case ChannelKind::force_flex:
        for (std::size_t i = 0; i < n; ++i) {
          const double t = i / rate;
          const double grip = 0.5 * (1.0 + std::cos(motion.phase(t)));
          x[i] = 2.0 + 8.0 * grip * grip + 5.0 * motion.bump(t) + 0.05 * gauss(rng);
        }
        break;
      case ChannelKind::emg_triceps:
      case ChannelKind::emg_epb: {
        const auto& model = emg_model(rate);
        const double sign = kind == ChannelKind::emg_triceps ? 1.0 : -1.0;
        const double offset = kind == ChannelKind::emg_triceps ? 0.0 : 12.0;
        Biquad hp{highpass2(20.0, rate)};
        Biquad lp{lowpass2(100.0, rate)};
        double norm = 1.0;
        std::mt19937_64 source(stream_seed(kind, 2));
        for (std::size_t i = 0; i < n; ++i) {
          const double t = i / rate;
          if (i % 10 == 0) {
            const double fmed = profile.fmed_start_hz + offset + profile.fmed_slope(condition) * t / 60.0;
            const double fc = model.corner_for_median(fmed);
            lp.c = lowpass2(fc, rate);
            norm = 1.0 / std::sqrt(model.power_for_corner(fc));
          }
          const double shaped = lp.step(hp.step(gauss(source))) * norm;
          double act = 0.5;
          if (task.cycle_rate_hz > 0.0) act = 0.5 * (1.0 + sign * std::sin(motion.phase(t)));
          const double envelope = 0.5 + 0.5 * act + 0.3 * motion.bump(t);
          x[i] = kEmgAmplitudeMv * envelope * shaped + 0.01 * std::sin(2.0 * kPi * 50.0 * t) + 0.002 * gauss(rng);
        }
        break;
      }
    }
    rec.channels[kind] = ChannelStream{cfg, packetize(kind, cfg, x)};
  }
  return rec;
}

LossPattern parse_loss_pattern(const std::string& text) {
  if (text == "random") return LossPattern::random;
  if (text == "burst") return LossPattern::burst;
  throw ValidationError("unknown loss pattern '" + text + "'");
}

SessionRecord inject_missingness(const SessionRecord& record, double fraction, LossPattern pattern,
                                 std::uint64_t seed, std::optional<ChannelKind> channel) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("loss fraction must be in [0, 1]");
  if (channel && !record.channels.count(*channel))
    throw ValidationError("record has no " + std::string(to_string(*channel)) + " channel");
  SessionRecord out = record;
  for (auto& [kind, stream] : out.channels) {
    if (channel && kind != *channel) continue;
    auto& packets = stream.packets;
    const std::size_t n = packets.size();
    const auto lost = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (lost == 0) continue;
    std::mt19937_64 rng(mix({seed, static_cast<std::uint64_t>(kind)}));
    std::vector<std::size_t> idx;
    if (pattern == LossPattern::random) {
      idx.resize(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(lost);
    } else {
      std::uniform_int_distribution<std::size_t> start(0, n - lost);
      const std::size_t s = start(rng);
      for (std::size_t i = 0; i < lost; ++i) idx.push_back(s + i);
    }
    for (auto i : idx) {
      packets[i].loss_flag = true;
      packets[i].payload.clear();
    }
  }
  return out;
}

}  // namespace armassist::signalgen
