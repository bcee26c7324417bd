#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "armassist/session.hpp"
#include "armassist/types.hpp"

namespace armassist::telemetry {

using nlohmann::json;

// Downsampled snapshot for the operator display.
struct TelemetryFrame {
  std::uint64_t seq = 0;
  double t_s = 0.0;
  std::map<ChannelKind, std::vector<double>> snippets;
  std::optional<WindowFeatures> features;
  std::optional<AssistCommand> command;
  std::string state;
};

// Wire messages are {"type", "seq", "payload"} JSON text.
std::string frame_message(const TelemetryFrame& frame);
std::string safety_event_message(std::uint64_t seq, double t_s, const SafetyFlags& flags, bool engaged);
std::string session_state_message(std::uint64_t seq, const json& state);

json to_json(const WindowFeatures& f);
json to_json(const AssistCommand& c);
json to_json(const SafetyFlags& f);

// Frames at `ui_rate_hz` over the view, each carrying the raw samples since the previous frame.
std::vector<TelemetryFrame> packetize_for_ui(const session::AlignedView& view, double ui_rate_hz,
                                             const std::vector<WindowFeatures>& features = {},
                                             const std::vector<AssistCommand>& commands = {});

// Bounded queue between the control loop and slow consumers. Producers never
// wait: when full, the oldest message is discarded.
class TelemetryQueue {
 public:
  explicit TelemetryQueue(std::size_t capacity = 64);

  void push(std::string message);
  std::optional<std::string> try_pop();
  std::optional<std::string> pop_for(std::chrono::milliseconds timeout);
  std::size_t dropped() const;
  std::size_t size() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<std::string> items_;
  std::size_t dropped_ = 0;
};

// Builds telemetry from the running loop: one frame every loop_rate/ui_rate
// ticks, plus an immediate safety_event whenever a flag first appears.
// Messages share one seq counter.
class Packetizer {
 public:
  Packetizer(TelemetryQueue& queue, double ui_rate_hz, double loop_rate_hz);

  void on_tick(double t_s, const std::map<ChannelKind, std::vector<double>>& new_samples,
               const std::optional<WindowFeatures>& features, const AssistCommand& command);
  void publish_state(const json& state);
  void begin_session();  // clears per-session frame state, keeps the seq counter
  std::uint64_t next_seq() const;

 private:
  mutable std::mutex mutex_;  // the loop and the control path both publish
  TelemetryQueue& queue_;
  int ticks_per_frame_;
  int tick_ = 0;
  std::uint64_t seq_ = 0;
  std::map<ChannelKind, std::vector<double>> pending_;
  SafetyFlags last_flags_;
  bool last_engaged_ = true;
};

}  // namespace armassist::telemetry
