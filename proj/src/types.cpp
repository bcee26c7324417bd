#include "armassist/types.hpp"

#include <cmath>

#include "armassist/errors.hpp"

namespace armassist {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::string_view (&names)[N], const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<E>(i);
  }
  throw ValidationError(std::string("unknown ") + what + ": '" + std::string(text) + "'");
}

constexpr std::string_view kChannelNames[] = {"emg_triceps", "emg_epb",    "imu_accel",
                                              "imu_gyro",    "force_flex", "joint_angle"};
constexpr std::string_view kTaskNames[] = {"push_extend", "pinch_grip", "reach_hold"};
constexpr std::string_view kConditionNames[] = {"baseline", "assisted"};

template <std::size_t N>
std::string_view name_of(int value, const std::string_view (&names)[N], const char* what) {
  if (value < 0 || value >= static_cast<int>(N))
    throw ValidationError(std::string("invalid ") + what + " value " + std::to_string(value));
  return names[value];
}

}  // namespace

std::string_view to_string(ChannelKind kind) {
  return name_of(static_cast<int>(kind), kChannelNames, "channel kind");
}
std::string_view to_string(TaskKind kind) { return name_of(static_cast<int>(kind), kTaskNames, "task kind"); }
std::string_view to_string(Condition condition) {
  return name_of(static_cast<int>(condition), kConditionNames, "condition");
}

ChannelKind parse_channel_kind(std::string_view text) {
  return parse_enum<ChannelKind>(text, kChannelNames, "channel kind");
}
TaskKind parse_task_kind(std::string_view text) { return parse_enum<TaskKind>(text, kTaskNames, "task kind"); }
Condition parse_condition(std::string_view text) {
  return parse_enum<Condition>(text, kConditionNames, "condition");
}

const std::vector<ChannelKind>& all_channel_kinds() {
  static const std::vector<ChannelKind> kinds = {ChannelKind::emg_triceps, ChannelKind::emg_epb,
                                                 ChannelKind::imu_accel,   ChannelKind::imu_gyro,
                                                 ChannelKind::force_flex,  ChannelKind::joint_angle};
  return kinds;
}

const std::vector<TaskKind>& all_task_kinds() {
  static const std::vector<TaskKind> kinds = {TaskKind::push_extend, TaskKind::pinch_grip,
                                              TaskKind::reach_hold};
  return kinds;
}

bool is_emg(ChannelKind kind) { return kind == ChannelKind::emg_triceps || kind == ChannelKind::emg_epb; }

void ChannelConfig::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw ValidationError("sample rate must be positive");
  if (resolution_bits < 2 || resolution_bits > 24) throw ValidationError("resolution must be 2..24 bits");
  if (!(lsb > 0.0)) throw ValidationError("lsb must be positive");
  if (samples_per_packet < 1) throw ValidationError("packets need at least one sample");
}

ChannelConfig default_channel_config(ChannelKind kind) {
  ChannelConfig c;
  c.kind = kind;
  switch (kind) {
    case ChannelKind::emg_triceps:
    case ChannelKind::emg_epb:
      c.sample_rate_hz = 1000.0;
      c.resolution_bits = 16;
      c.lsb = 5.0 / 32768.0;
      c.unit = "mV";
      break;
    case ChannelKind::imu_accel:
      c.sample_rate_hz = 200.0;
      c.resolution_bits = 16;
      c.lsb = 4.0 * 9.80665 / 32768.0;
      c.unit = "m/s^2";
      break;
    case ChannelKind::imu_gyro:
      c.sample_rate_hz = 200.0;
      c.resolution_bits = 16;
      c.lsb = 500.0 / 32768.0;
      c.unit = "deg/s";
      break;
    case ChannelKind::force_flex:
      c.sample_rate_hz = 200.0;
      c.resolution_bits = 12;
      c.lsb = 50.0 / 2048.0;
      c.unit = "N";
      break;
    case ChannelKind::joint_angle:
      c.sample_rate_hz = 100.0;
      c.resolution_bits = 16;
      c.lsb = 0.01;
      c.unit = "deg";
      break;
  }
  c.samples_per_packet = static_cast<int>(std::lround(c.sample_rate_hz * 0.05));
  return c;
}

void TaskSpec::validate() const {
  to_string(kind);
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw ValidationError("task duration must be positive");
  if (cycle_rate_hz < 0.0 || !std::isfinite(cycle_rate_hz)) throw ValidationError("cycle rate must be >= 0");
  for (const auto& p : perturbations) {
    if (p.time_s < 0.0 || p.time_s > duration_s) throw ValidationError("perturbation outside the task");
  }
}

TaskSpec default_task(TaskKind kind, double duration_s) {
  TaskSpec t;
  t.kind = kind;
  t.duration_s = duration_s;
  t.cycle_rate_hz = 10.0 / 60.0;
  if (kind == TaskKind::reach_hold) {
    for (double at = 7.5; at < duration_s; at += 15.0) t.perturbations.push_back({at, 1.0});
  }
  return t;
}

ChannelKind primary_emg(TaskKind kind) {
  return kind == TaskKind::pinch_grip ? ChannelKind::emg_epb : ChannelKind::emg_triceps;
}

}  // namespace armassist
