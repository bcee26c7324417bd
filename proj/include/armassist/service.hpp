#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "armassist/config.hpp"

namespace armassist::service {

using nlohmann::json;

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Session-control backend: HTTP control endpoints plus a /telemetry WebSocket
// carrying {"type", "seq", "payload"} messages (frame, safety_event,
// session_state; ack and error answer control messages sent over the socket).
// One session runs at a time, paced against the wall clock.
class Service {
 public:
  explicit Service(RunConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds config.host:config.port (0 picks a free port) and returns the bound port.
  unsigned short start();
  void stop();

  // Same dispatch the network front end uses.
  HttpReply handle(const std::string& method, const std::string& target, const std::string& body);
  json state() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs until SIGINT or SIGTERM.
int cmd_serve(const RunConfig& config);

}  // namespace armassist::service
