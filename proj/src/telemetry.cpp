#include "armassist/telemetry.hpp"

#include <cmath>

#include "armassist/errors.hpp"

namespace armassist::telemetry {

namespace {

json message(const char* type, std::uint64_t seq, json payload) {
  return json{{"type", type}, {"seq", seq}, {"payload", std::move(payload)}};
}

json samples_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

}  // namespace

json to_json(const WindowFeatures& f) {
  return json{{"index", f.index},
              {"start_s", f.start_s},
              {"rms", f.rms},
              {"mav", f.mav},
              {"zc", f.zc},
              {"median_freq_hz", f.median_freq_hz ? json(*f.median_freq_hz) : json(nullptr)},
              {"ti", f.ti ? json(*f.ti) : json(nullptr)}};
}

json to_json(const SafetyFlags& f) {
  return json{{"torque_clamped", f.torque_clamped},
              {"jerk_limited", f.jerk_limited},
              {"angle_limited", f.angle_limited},
              {"stall_timeout", f.stall_timeout}};
}

json to_json(const AssistCommand& c) {
  return json{{"t_s", c.t_s},         {"torque", c.torque},   {"raw_torque", c.raw_torque},
              {"need_score", c.need_score}, {"engaged", c.engaged}, {"flags", to_json(c.flags)}};
}

std::string frame_message(const TelemetryFrame& frame) {
  json snippets = json::object();
  for (const auto& [kind, v] : frame.snippets) snippets[std::string(to_string(kind))] = samples_json(v);
  json payload{{"t_s", frame.t_s},
               {"snippets", std::move(snippets)},
               {"features", frame.features ? to_json(*frame.features) : json(nullptr)},
               {"ti_badge", frame.features && frame.features->ti ? json(*frame.features->ti) : json(nullptr)},
               {"command", frame.command ? to_json(*frame.command) : json(nullptr)},
               {"state", frame.state}};
  return message("frame", frame.seq, std::move(payload)).dump();
}

std::string safety_event_message(std::uint64_t seq, double t_s, const SafetyFlags& flags, bool engaged) {
  return message("safety_event", seq, json{{"t_s", t_s}, {"flags", to_json(flags)}, {"engaged", engaged}}).dump();
}

std::string session_state_message(std::uint64_t seq, const json& state) {
  return message("session_state", seq, state).dump();
}

std::vector<TelemetryFrame> packetize_for_ui(const session::AlignedView& view, double ui_rate_hz,
                                             const std::vector<WindowFeatures>& features,
                                             const std::vector<AssistCommand>& commands) {
  if (!(ui_rate_hz >= 25.0 && ui_rate_hz <= 50.0)) throw ValidationError("UI rate must be 25-50 Hz");
  std::vector<TelemetryFrame> out;
  const double duration = view.end_s - view.start_s;
  if (!(duration > 0.0)) return out;
  const auto n = static_cast<std::size_t>(std::floor(duration * ui_rate_hz + 1e-9));
  std::size_t fi = 0, ci = 0;
  for (std::size_t i = 0; i < n; ++i) {
    TelemetryFrame f;
    f.seq = i;
    const double t0 = i / ui_rate_hz, t1 = (i + 1) / ui_rate_hz;
    f.t_s = view.start_s + t1;
    for (const auto& [kind, ch] : view.channels) {
      const double rate = ch.config.sample_rate_hz;
      const auto a = static_cast<Eigen::Index>(std::llround(t0 * rate));
      const auto b = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::llround(t1 * rate)), ch.values.size());
      std::vector<double> v;
      for (Eigen::Index k = a; k < b; ++k) v.push_back(ch.values[k]);
      f.snippets[kind] = std::move(v);
    }
    while (fi < features.size() && features[fi].start_s + 0.25 <= t1 + 1e-9) f.features = features[fi++];
    if (!f.features && fi > 0) f.features = features[fi - 1];
    while (ci < commands.size() && commands[ci].t_s <= f.t_s + 1e-9) f.command = commands[ci++];
    if (!f.command && ci > 0) f.command = commands[ci - 1];
    f.state = "replay";
    out.push_back(std::move(f));
  }
  return out;
}

TelemetryQueue::TelemetryQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("queue capacity must be positive");
}

void TelemetryQueue::push(std::string message) {
  {
    std::lock_guard lock(mutex_);
    if (items_.size() >= capacity_) {
      items_.pop_front();
      ++dropped_;
    }
    items_.push_back(std::move(message));
  }
  ready_.notify_one();
}

std::optional<std::string> TelemetryQueue::try_pop() {
  std::lock_guard lock(mutex_);
  if (items_.empty()) return std::nullopt;
  auto m = std::move(items_.front());
  items_.pop_front();
  return m;
}

std::optional<std::string> TelemetryQueue::pop_for(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  if (!ready_.wait_for(lock, timeout, [this] { return !items_.empty(); })) return std::nullopt;
  auto m = std::move(items_.front());
  items_.pop_front();
  return m;
}

std::size_t TelemetryQueue::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

std::size_t TelemetryQueue::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

Packetizer::Packetizer(TelemetryQueue& queue, double ui_rate_hz, double loop_rate_hz) : queue_(queue) {
  if (!(ui_rate_hz >= 25.0 && ui_rate_hz <= 50.0)) throw ValidationError("UI rate must be 25-50 Hz");
  ticks_per_frame_ = std::max(1, static_cast<int>(std::lround(loop_rate_hz / ui_rate_hz)));
}

void Packetizer::on_tick(double t_s, const std::map<ChannelKind, std::vector<double>>& new_samples,
                         const std::optional<WindowFeatures>& features, const AssistCommand& command) {
  std::lock_guard lock(mutex_);
  for (const auto& [kind, v] : new_samples) {
    auto& p = pending_[kind];
    p.insert(p.end(), v.begin(), v.end());
  }
  const bool new_flag = (command.flags.torque_clamped && !last_flags_.torque_clamped) ||
                        (command.flags.jerk_limited && !last_flags_.jerk_limited) ||
                        (command.flags.angle_limited && !last_flags_.angle_limited) ||
                        (command.flags.stall_timeout && !last_flags_.stall_timeout) ||
                        (last_engaged_ && !command.engaged);
  if (new_flag) queue_.push(safety_event_message(seq_++, t_s, command.flags, command.engaged));
  last_flags_ = command.flags;
  last_engaged_ = command.engaged;

  if (++tick_ < ticks_per_frame_) return;
  tick_ = 0;
  TelemetryFrame f;
  f.seq = seq_++;
  f.t_s = t_s;
  f.snippets = std::move(pending_);
  pending_.clear();
  f.features = features;
  f.command = command;
  f.state = command.engaged ? "running" : "disengaged";
  queue_.push(frame_message(f));
}

void Packetizer::publish_state(const json& state) {
  std::lock_guard lock(mutex_);
  queue_.push(session_state_message(seq_++, state));
}

void Packetizer::begin_session() {
  std::lock_guard lock(mutex_);
  tick_ = 0;
  pending_.clear();
  last_flags_ = {};
  last_engaged_ = true;
}

std::uint64_t Packetizer::next_seq() const {
  std::lock_guard lock(mutex_);
  return seq_;
}

}  // namespace armassist::telemetry
