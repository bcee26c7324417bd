#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

#include "armassist/session.hpp"
#include "armassist/telemetry.hpp"
#include "armassist/types.hpp"

namespace armassist::assist {

class NeedModel {
 public:
  virtual ~NeedModel() = default;
  virtual double score(const WindowFeatures& features) const = 0;  // in [0, 1]
};

// Logistic score of a linear combination of window features (EMG in mV).
struct LogisticNeedModel : NeedModel {
  double bias = -3.0;
  double w_rms = 2.0;
  double w_mav = 2.0;
  double w_zc = 0.0;
  double w_ti = 6.0;
  double w_fmed = -0.005;

  double score(const WindowFeatures& f) const override;
  void validate() const;
};

struct PdGains {
  double kp = 0.8;  // per degree
  double kd = 0.1;  // per deg/s

  void validate() const;
};

double pd_reference(double target_deg, double angle_deg, double velocity_dps, const PdGains& gains);

struct SafetyEnvelope {
  double torque_max = 20.0;
  double jerk_max = 5.0e4;  // bound on the command's second difference is jerk_max * dt^2
  double angle_min_deg = 0.0;
  double angle_max_deg = 150.0;
  double stall_velocity_dps = 2.0;
  double stall_torque_frac = 0.5;
  double stall_timeout_s = 1.0;
  double dt_s = 0.01;

  void validate() const;
  int stall_ticks() const;  // ticks of sustained stall that trigger a cut
};

// Limits one command stream. Torque is clamped, then moved toward its target no
// faster than the jerk bound allows while staying able to stop inside the torque
// bound. Pushing past an angle limit ramps the command to zero. A sustained stall
// cuts actuation until reset().
class SafetyState {
 public:
  explicit SafetyState(const SafetyEnvelope& envelope = {});

  AssistCommand apply(double raw_torque, double angle_deg, double velocity_dps, double t_s);
  void reset();
  bool engaged() const { return engaged_; }
  const SafetyEnvelope& envelope() const { return env_; }

 private:
  SafetyEnvelope env_;
  bool engaged_ = true;
  bool stalled_ = false;
  double u1_ = 0.0, u2_ = 0.0;
  int stall_count_ = 0;
};

AssistCommand apply_envelope(double raw_torque, double angle_deg, double velocity_dps, SafetyState& state,
                             double t_s = 0.0);

struct LoopOptions {
  double duration_s = 120.0;
  double loop_rate_hz = 100.0;
  double assist_level = 0.5;  // 0 disables assistance
  bool realtime = false;      // pace ticks against the wall clock
  double peak_window_s = 8.0; // extension target = recent angle peak
  telemetry::Packetizer* telemetry = nullptr;
  const std::atomic<bool>* stop = nullptr;
  SafetyState* safety = nullptr;  // external state lets a caller reset mid-run
  // Live controls from another thread, read once per tick.
  const std::atomic<double>* live_assist_level = nullptr;
  std::atomic<bool>* reset_request = nullptr;
  std::function<void(const AssistCommand&)> on_command;
};

struct LoopStats {
  std::size_t ticks = 0;
  double loop_rate_hz = 100.0;
  std::size_t missed_deadlines = 0;
  std::vector<double> latency_s;

  double median_latency_s() const;
  double p95_latency_s() const;
  double max_latency_s() const;
};

struct LoopResult {
  std::vector<AssistCommand> commands;
  std::vector<WindowFeatures> features;
  LoopStats stats;
};

// Runs floor(duration * rate) ticks over a recorded session. Each tick ingests
// the samples that arrived in its period, updates features when a window closes
// (holding the last ones in between) and emits one bounded command. Latency is
// measured from input to command.
LoopResult run_loop(const session::AlignedView& view, TaskKind task, const NeedModel& model,
                    const SafetyEnvelope& envelope, const PdGains& gains, const LoopOptions& options);

// commands.jsonl is deterministic; timing goes to loop_stats.json.
void write_loop_artifacts(const LoopResult& result, const std::filesystem::path& dir);

}  // namespace armassist::assist
