#include "armassist/assist.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <thread>

#include "armassist/errors.hpp"
#include "armassist/persist.hpp"
#include "armassist/pipeline.hpp"

namespace armassist::assist {

namespace {

// Extra distance covered while braking from velocity v (per tick) at `decel` per tick^2.
double braking_distance(double v, double decel) {
  if (v <= 0.0) return 0.0;
  const double m = std::floor(v / decel);
  return m * v - decel * m * (m + 1.0) / 2.0;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double t = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + t * (v[i + 1] - v[i]) : v[i];
}

}  // namespace

double LogisticNeedModel::score(const WindowFeatures& f) const {
  const double z = bias + w_rms * f.rms + w_mav * f.mav + w_zc * f.zc + w_ti * f.ti.value_or(0.0) +
                   w_fmed * f.median_freq_hz.value_or(0.0);
  return 1.0 / (1.0 + std::exp(-z));
}

void LogisticNeedModel::validate() const {
  for (double w : {bias, w_rms, w_mav, w_zc, w_ti, w_fmed})
    if (!std::isfinite(w)) throw ValidationError("need-model weights must be finite");
  if (!(w_ti > 0.0)) throw ValidationError("need score must increase with tremor index");
}

void PdGains::validate() const {
  if (!(kp >= 0.0) || !(kd >= 0.0) || !std::isfinite(kp) || !std::isfinite(kd))
    throw ValidationError("PD gains must be finite and non-negative");
}

double pd_reference(double target_deg, double angle_deg, double velocity_dps, const PdGains& gains) {
  return gains.kp * (target_deg - angle_deg) - gains.kd * velocity_dps;
}

void SafetyEnvelope::validate() const {
  if (!(torque_max > 0.0)) throw ValidationError("torque_max must be positive");
  if (!(jerk_max > 0.0)) throw ValidationError("jerk_max must be positive");
  if (!(angle_min_deg < angle_max_deg)) throw ValidationError("angle bounds must satisfy min < max");
  if (!(stall_velocity_dps >= 0.0)) throw ValidationError("stall velocity must be >= 0");
  if (!(stall_torque_frac > 0.0 && stall_torque_frac <= 1.0)) throw ValidationError("stall torque fraction must be in (0, 1]");
  if (!(stall_timeout_s > 0.0)) throw ValidationError("stall timeout must be positive");
  if (!(dt_s > 0.0)) throw ValidationError("control period must be positive");
}

int SafetyEnvelope::stall_ticks() const { return static_cast<int>(std::floor(stall_timeout_s / dt_s + 1e-9)) + 1; }

SafetyState::SafetyState(const SafetyEnvelope& envelope) : env_(envelope) { env_.validate(); }

void SafetyState::reset() {
  engaged_ = true;
  stalled_ = false;
  u1_ = u2_ = 0.0;
  stall_count_ = 0;
}

AssistCommand SafetyState::apply(double raw_torque, double angle_deg, double velocity_dps, double t_s) {
  AssistCommand cmd;
  cmd.t_s = t_s;
  cmd.raw_torque = raw_torque;
  if (!engaged_) {
    cmd.engaged = false;
    cmd.torque = 0.0;
    cmd.flags.stall_timeout = stalled_;
    u2_ = u1_;
    u1_ = 0.0;
    return cmd;
  }
  const double tmax = env_.torque_max;
  double target = std::isfinite(raw_torque) ? raw_torque : 0.0;
  if (std::abs(target) > tmax) {
    target = std::copysign(tmax, target);
    cmd.flags.torque_clamped = true;
  }
  if ((angle_deg >= env_.angle_max_deg && target > 0.0) || (angle_deg <= env_.angle_min_deg && target < 0.0)) {
    target = 0.0;
    cmd.flags.angle_limited = true;
  }

  // Step limits: the jerk bound around the current slope, narrowed so that
  // full deceleration from the new state still stops inside +/-tmax.
  const double decel = env_.jerk_max * env_.dt_s * env_.dt_s;
  const double v1 = u1_ - u2_;
  double lo = v1 - decel, hi = v1 + decel;
  auto over_top = [&](double v) { return u1_ + v + braking_distance(v, decel) > tmax; };
  auto under_bottom = [&](double v) { return u1_ + v - braking_distance(-v, decel) < -tmax; };
  if (over_top(hi)) {
    double a = lo, b = hi;
    if (over_top(a)) {
      hi = lo;
    } else {
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (a + b);
        (over_top(m) ? b : a) = m;
      }
      hi = a;
    }
  }
  if (under_bottom(lo)) {
    double a = lo, b = hi;
    if (under_bottom(b)) {
      lo = hi;
    } else {
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (a + b);
        (under_bottom(m) ? a : b) = m;
      }
      lo = b;
    }
  }
  // Fastest step toward the target that can still brake to rest on it.
  const double gap = target - u1_;
  double want = gap;
  auto overshoots = [&](double v) { return std::abs(v) + braking_distance(std::abs(v), decel) > std::abs(gap); };
  if (overshoots(want)) {
    double a = 0.0, b = gap;
    for (int it = 0; it < 60; ++it) {
      const double m = 0.5 * (a + b);
      (overshoots(m) ? b : a) = m;
    }
    want = a;
  }
  double u = u1_ + std::clamp(want, lo, hi);
  u = std::clamp(u, -tmax, tmax);
  if (std::abs(u - target) > 1e-12) cmd.flags.jerk_limited = true;

  const bool stalling = std::abs(velocity_dps) < env_.stall_velocity_dps && std::abs(u) > env_.stall_torque_frac * tmax;
  stall_count_ = stalling ? stall_count_ + 1 : 0;
  if (stall_count_ >= env_.stall_ticks()) {
    engaged_ = false;
    stalled_ = true;
    cmd.engaged = false;
    cmd.flags.stall_timeout = true;
    u = 0.0;
  }
  cmd.torque = u;
  u2_ = u1_;
  u1_ = u;
  return cmd;
}

AssistCommand apply_envelope(double raw_torque, double angle_deg, double velocity_dps, SafetyState& state,
                             double t_s) {
  return state.apply(raw_torque, angle_deg, velocity_dps, t_s);
}

double LoopStats::median_latency_s() const { return quantile(latency_s, 0.5); }
double LoopStats::p95_latency_s() const { return quantile(latency_s, 0.95); }
double LoopStats::max_latency_s() const {
  return latency_s.empty() ? 0.0 : *std::max_element(latency_s.begin(), latency_s.end());
}

LoopResult run_loop(const session::AlignedView& view, TaskKind task, const NeedModel& model,
                    const SafetyEnvelope& envelope, const PdGains& gains, const LoopOptions& options) {
  envelope.validate();
  gains.validate();
  if (!(options.loop_rate_hz > 0.0)) throw ValidationError("loop rate must be positive");
  if (!(options.duration_s >= 0.0)) throw ValidationError("loop duration must be >= 0");
  if (!(options.assist_level >= 0.0 && options.assist_level <= 1.0)) throw ValidationError("assist level must be in [0, 1]");
  const auto& emg = view.channel(primary_emg(task));
  const auto& accel = view.channel(ChannelKind::imu_accel);
  const auto& angle = view.channel(ChannelKind::joint_angle);
  const session::AlignedChannel* gyro = view.has(ChannelKind::imu_gyro) ? &view.channel(ChannelKind::imu_gyro) : nullptr;

  PipelineConfig pcfg;
  pcfg.emg_rate_hz = emg.config.sample_rate_hz;
  pcfg.accel_rate_hz = accel.config.sample_rate_hz;
  FeaturePipeline pipeline(pcfg);

  SafetyEnvelope env = envelope;
  env.dt_s = 1.0 / options.loop_rate_hz;
  SafetyState local(env);
  SafetyState& safety = options.safety ? *options.safety : local;

  LoopResult result;
  const auto ticks = static_cast<std::size_t>(std::floor(options.duration_s * options.loop_rate_hz + 1e-9));
  result.commands.reserve(ticks);
  result.stats.loop_rate_hz = options.loop_rate_hz;
  result.stats.latency_s.reserve(ticks);

  auto upto = [&](const session::AlignedChannel& ch, std::size_t tick) {
    const auto n = static_cast<Eigen::Index>(std::floor((tick + 1) * ch.config.sample_rate_hz / options.loop_rate_hz + 1e-9));
    return std::min<Eigen::Index>(n, ch.values.size());
  };
  Eigen::Index emg_at = 0, accel_at = 0, angle_at = 0, gyro_at = 0;
  std::optional<WindowFeatures> latest;
  double last_angle = std::nan(""), last_velocity = 0.0, prev_angle = std::nan("");
  std::deque<std::pair<Eigen::Index, double>> peak;  // monotone deque for the running maximum
  const auto peak_len = static_cast<Eigen::Index>(options.peak_window_s * angle.config.sample_rate_hz);

  const auto start = std::chrono::steady_clock::now();
  const auto period = std::chrono::duration<double>(1.0 / options.loop_rate_hz);
  for (std::size_t k = 0; k < ticks; ++k) {
    if (options.stop && options.stop->load()) break;
    if (options.realtime)
      std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(period * k));
    const auto t0 = std::chrono::steady_clock::now();
    const double t = (k + 1) / options.loop_rate_hz;

    const Eigen::Index emg_to = upto(emg, k), accel_to = upto(accel, k);
    for (auto& f : pipeline.push(emg.values.segment(emg_at, emg_to - emg_at), accel.values.segment(accel_at, accel_to - accel_at))) {
      latest = f;
      result.features.push_back(f);
    }

    const Eigen::Index angle_to = upto(angle, k);
    for (Eigen::Index i = angle_at; i < angle_to; ++i) {
      const double a = angle.values[i];
      if (!std::isfinite(a)) continue;
      prev_angle = last_angle;
      last_angle = a;
      while (!peak.empty() && peak.back().second <= a) peak.pop_back();
      peak.emplace_back(i, a);
    }
    while (!peak.empty() && peak.front().first <= angle_to - 1 - peak_len) peak.pop_front();
    if (gyro) {
      const Eigen::Index gyro_to = upto(*gyro, k);
      for (Eigen::Index i = gyro_at; i < gyro_to; ++i)
        if (std::isfinite(gyro->values[i])) last_velocity = gyro->values[i];
      gyro_at = gyro_to;
    } else if (std::isfinite(prev_angle) && std::isfinite(last_angle)) {
      last_velocity = (last_angle - prev_angle) * angle.config.sample_rate_hz;
    }

    if (options.reset_request && options.reset_request->exchange(false)) safety.reset();
    const double level = options.live_assist_level ? std::clamp(options.live_assist_level->load(), 0.0, 1.0)
                                                   : options.assist_level;
    double raw = 0.0, need = 0.0;
    if (latest && std::isfinite(last_angle)) {
      need = model.score(*latest);
      // Assist drives toward the recent extension peak while extending; otherwise only damping acts.
      const double target = (last_velocity > 0.0 && !peak.empty()) ? peak.front().second : last_angle;
      raw = level * need * pd_reference(target, last_angle, last_velocity, gains);
    }
    auto cmd = safety.apply(raw, std::isfinite(last_angle) ? last_angle : 0.5 * (env.angle_min_deg + env.angle_max_deg),
                            last_velocity, t);
    cmd.need_score = need;
    const auto t1 = std::chrono::steady_clock::now();
    const double latency = std::chrono::duration<double>(t1 - t0).count();
    result.stats.latency_s.push_back(latency);
    if (latency > 1.0 / options.loop_rate_hz) ++result.stats.missed_deadlines;
    ++result.stats.ticks;
    result.commands.push_back(cmd);
    if (options.on_command) options.on_command(cmd);

    if (options.telemetry) {
      std::map<ChannelKind, std::vector<double>> fresh;
      auto take = [&](ChannelKind kind, const session::AlignedChannel& ch, Eigen::Index from, Eigen::Index to) {
        fresh[kind] = std::vector<double>(ch.values.data() + from, ch.values.data() + to);
      };
      take(primary_emg(task), emg, emg_at, emg_to);
      take(ChannelKind::imu_accel, accel, accel_at, accel_to);
      take(ChannelKind::joint_angle, angle, angle_at, angle_to);
      options.telemetry->on_tick(t, fresh, latest, cmd);
    }
    emg_at = emg_to;
    accel_at = accel_to;
    angle_at = angle_to;
  }
  return result;
}

void write_loop_artifacts(const LoopResult& result, const std::filesystem::path& dir) {
  std::string lines;
  for (const auto& c : result.commands) lines += telemetry::to_json(c).dump() + "\n";
  session::write_text(dir / "commands.jsonl", lines);
  std::size_t overrides = 0;
  bool disengaged = false;
  for (const auto& c : result.commands) {
    if (c.flags.any()) ++overrides;
    if (!c.engaged) disengaged = true;
  }
  nlohmann::ordered_json j;
  j["ticks"] = result.stats.ticks;
  j["loop_rate_hz"] = result.stats.loop_rate_hz;
  j["missed_deadlines"] = result.stats.missed_deadlines;
  j["median_latency_ms"] = result.stats.median_latency_s() * 1e3;
  j["p95_latency_ms"] = result.stats.p95_latency_s() * 1e3;
  j["max_latency_ms"] = result.stats.max_latency_s() * 1e3;
  j["safety_overrides"] = overrides;
  j["disengaged"] = disengaged;
  session::write_text(dir / "loop_stats.json", j.dump(2) + "\n");
}

}  // namespace armassist::assist
