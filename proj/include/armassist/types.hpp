#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace armassist {

enum class ChannelKind { emg_triceps, emg_epb, imu_accel, imu_gyro, force_flex, joint_angle };
enum class TaskKind { push_extend, pinch_grip, reach_hold };
enum class Condition { baseline, assisted };

std::string_view to_string(ChannelKind kind);
std::string_view to_string(TaskKind kind);
std::string_view to_string(Condition condition);
ChannelKind parse_channel_kind(std::string_view text);
TaskKind parse_task_kind(std::string_view text);
Condition parse_condition(std::string_view text);

const std::vector<ChannelKind>& all_channel_kinds();
const std::vector<TaskKind>& all_task_kinds();
bool is_emg(ChannelKind kind);

// Samples travel as signed ADC counts; physical value = counts * lsb.
struct ChannelConfig {
  ChannelKind kind = ChannelKind::emg_triceps;
  double sample_rate_hz = 0.0;
  int resolution_bits = 16;
  double lsb = 1.0;
  int samples_per_packet = 1;
  std::string unit;

  std::int32_t max_count() const { return (std::int32_t{1} << (resolution_bits - 1)) - 1; }
  std::int32_t min_count() const { return -(std::int32_t{1} << (resolution_bits - 1)); }
  double packet_duration_s() const { return samples_per_packet / sample_rate_hz; }
  void validate() const;
};

// Acquisition defaults: EMG 1 kHz, IMU and force 200 Hz, goniometer 100 Hz, 50 ms packets.
ChannelConfig default_channel_config(ChannelKind kind);

struct Perturbation {
  double time_s = 0.0;
  double magnitude = 0.0;
};

// cycle_rate_hz > 0 marks a cyclic task paced by the subject; 0 is an isometric hold.
struct TaskSpec {
  TaskKind kind = TaskKind::push_extend;
  double duration_s = 120.0;
  double cycle_rate_hz = 0.2;
  std::vector<Perturbation> perturbations;

  void validate() const;
};

TaskSpec default_task(TaskKind kind, double duration_s = 120.0);

// EMG channel that carries the task's prime mover.
ChannelKind primary_emg(TaskKind kind);

struct SamplePacket {
  ChannelKind channel = ChannelKind::emg_triceps;
  std::uint64_t seq = 0;
  double hub_timestamp_s = 0.0;
  std::vector<std::int32_t> payload;
  bool loss_flag = false;

  bool operator==(const SamplePacket&) const = default;
};

struct ChannelStream {
  ChannelConfig config;
  std::vector<SamplePacket> packets;
};

struct QcSummary {
  std::map<ChannelKind, double> missingness;
  std::map<ChannelKind, bool> clipping;
  bool impedance_ok = true;
  std::vector<std::size_t> outlier_window_indices;
  bool excluded = false;
  std::string exclusion_reason;
};

struct SessionOutcomes {
  double ti_median = 0.0;
  double rom_deg = 0.0;
  double reps_per_min = 0.0;
  double fmed_slope_hz_per_min = 0.0;
  std::size_t n_windows = 0;
  std::size_t n_ti_windows = 0;
  int rep_count = 0;
};

struct SessionRecord {
  std::string subject_id;
  TaskSpec task;
  Condition condition = Condition::baseline;
  int trial = 0;
  bool impedance_ok = true;
  std::map<ChannelKind, ChannelStream> channels;
  QcSummary qc;
  std::optional<SessionOutcomes> outcomes;
};

// Features for one 250 ms analysis window of the task's prime-mover EMG.
struct WindowFeatures {
  std::size_t index = 0;
  double start_s = 0.0;
  double rms = 0.0;
  double mav = 0.0;
  int zc = 0;
  std::optional<double> median_freq_hz;
  std::optional<double> ti;
};

struct SafetyFlags {
  bool torque_clamped = false;
  bool jerk_limited = false;
  bool angle_limited = false;
  bool stall_timeout = false;

  bool any() const { return torque_clamped || jerk_limited || angle_limited || stall_timeout; }
  bool operator==(const SafetyFlags&) const = default;
};

struct AssistCommand {
  double t_s = 0.0;
  double torque = 0.0;
  double raw_torque = 0.0;
  double need_score = 0.0;
  bool engaged = true;
  SafetyFlags flags;

  bool operator==(const AssistCommand&) const = default;
};

}  // namespace armassist
