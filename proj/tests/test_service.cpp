#include <doctest.h>

#include <set>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "armassist/commands.hpp"
#include "armassist/errors.hpp"
#include "armassist/persist.hpp"
#include "armassist/service.hpp"
#include "armassist/signalgen.hpp"
#include "armassist/telemetry.hpp"
#include "tmpdir.hpp"

using namespace armassist;
using namespace std::chrono_literals;
using nlohmann::json;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

RunConfig service_config(const std::filesystem::path& root) {
  RunConfig c;
  c.cohort_size = 3;
  c.tasks = {TaskKind::push_extend};
  c.duration_s = 20.0;
  c.output_root = root;
  c.port = 0;
  c.analysis.b_resamples = 1000;
  c.analysis.task_resamples = 20;
  return c;
}

json call(service::Service& s, const std::string& method, const std::string& target, const json& body = nullptr,
          int expect = 200) {
  const auto r = s.handle(method, target, body.is_null() ? "" : body.dump());
  CHECK(r.status == expect);
  return json::parse(r.body);
}

std::string error_code(service::Service& s, const std::string& method, const std::string& target,
                       const std::string& body, int expect) {
  const auto r = s.handle(method, target, body);
  CHECK(r.status == expect);
  return json::parse(r.body).at("error").at("code").get<std::string>();
}

bool wait_idle(service::Service& s, std::chrono::seconds limit = 30s) {
  const auto until = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < until) {
    if (s.state().at("state") == "idle") return true;
    std::this_thread::sleep_for(20ms);
  }
  return false;
}

std::pair<int, std::string> http_get(unsigned short port, const std::string& target) {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::string_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

class WsClient {
 public:
  explicit WsClient(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/telemetry");
  }
  ~WsClient() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }
  void send(const std::string& text) { ws_.write(net::buffer(text)); }
  json read() {
    beast::flat_buffer b;
    ws_.read(b);
    return json::parse(beast::buffers_to_string(b.data()));
  }
  // Reads until a message of `type` arrives; everything read is appended to `log`.
  json read_until(const std::string& type, std::vector<json>& log) {
    for (;;) {
      auto m = read();
      log.push_back(m);
      if (m.at("type") == type) return m;
    }
  }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST_CASE("telemetry queue drops the oldest message when full") {
  telemetry::TelemetryQueue q(3);
  for (const char* m : {"a", "b", "c", "d", "e"}) q.push(m);
  CHECK(q.dropped() == 2);
  CHECK(q.size() == 3);
  CHECK(q.try_pop() == "c");
  CHECK(q.pop_for(1ms) == "d");
  CHECK(q.try_pop() == "e");
  CHECK_FALSE(q.pop_for(1ms));
}

TEST_CASE("packetizer emits frames at the UI rate and safety events at once") {
  telemetry::TelemetryQueue q(1000);
  telemetry::Packetizer p(q, 25.0, 100.0);
  AssistCommand cmd;
  std::vector<json> out;
  for (int k = 0; k < 40; ++k) {
    cmd.t_s = (k + 1) * 0.01;
    cmd.flags.torque_clamped = k >= 9;
    p.on_tick(cmd.t_s, {{ChannelKind::imu_accel, {1.0, 2.0}}}, std::nullopt, cmd);
    while (auto m = q.try_pop()) out.push_back(json::parse(*m));
  }
  int frames = 0;
  std::uint64_t last = 0;
  bool first = true;
  for (const auto& m : out) {
    const auto seq = m.at("seq").get<std::uint64_t>();
    if (!first) CHECK(seq == last + 1);
    first = false;
    last = seq;
    if (m.at("type") == "frame") {
      ++frames;
      CHECK(m.at("payload").at("snippets").at("imu_accel").size() == 8);
    }
  }
  CHECK(frames == 10);
  // The flag appears on tick 10; its event precedes that tick's frame.
  int event_at = -1, frame_after = -1;
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    if (out[i].at("type") == "safety_event" && event_at < 0) event_at = i;
    if (event_at >= 0 && frame_after < 0 && out[i].at("type") == "frame") frame_after = i;
  }
  REQUIRE(event_at >= 0);
  CHECK(out[event_at].at("payload").at("flags").at("torque_clamped") == true);
  CHECK(out[event_at].at("payload").at("t_s").get<double>() == doctest::Approx(0.10));
  CHECK(frame_after == event_at + 1);
  CHECK(std::count_if(out.begin(), out.end(), [](const json& m) { return m.at("type") == "safety_event"; }) == 1);

  const auto before = p.next_seq();
  p.publish_state({{"state", "idle"}});
  CHECK(json::parse(*q.try_pop()).at("seq") == before);
}

TEST_CASE("offline packetization covers the session at the UI rate") {
  signalgen::SubjectProfile prof;
  prof.id = "S01";
  const auto view =
      session::synchronize(signalgen::generate_session(prof, default_task(TaskKind::reach_hold, 10.0), Condition::baseline).channels);
  const auto frames = telemetry::packetize_for_ui(view, 25.0);
  CHECK(frames.size() == 250);
  std::size_t accel = 0;
  for (const auto& f : frames) accel += f.snippets.at(ChannelKind::imu_accel).size();
  CHECK(accel == static_cast<std::size_t>(view.channel(ChannelKind::imu_accel).values.size()));
  CHECK_THROWS_AS(telemetry::packetize_for_ui(view, 10.0), ValidationError);
}

TEST_CASE("control endpoints follow the session state machine") {
  TempDir tmp;
  service::Service svc(service_config(tmp.path()));
  auto st = call(svc, "GET", "/api/session/state");
  CHECK(st.at("state") == "idle");
  CHECK(st.at("condition") == "baseline");

  CHECK(error_code(svc, "POST", "/api/session/stop", "", 409) == "no_active_session");
  CHECK(error_code(svc, "POST", "/api/session/assist_level", R"({"level":0.4})", 409) == "assist_inactive");
  CHECK(error_code(svc, "POST", "/api/session/start", R"({"duration_s":0.5})", 400) == "bad_request");
  CHECK(error_code(svc, "POST", "/api/session/start", R"({"subject_id":"S77"})", 400) == "unknown_subject");
  CHECK(error_code(svc, "POST", "/api/session/start", R"({"task":"juggle"})", 400) == "bad_request");
  CHECK(error_code(svc, "POST", "/api/session/start", "{nope", 400) == "malformed_json");
  CHECK(error_code(svc, "POST", "/api/session/start", "[1]", 400) == "malformed_json");
  CHECK(error_code(svc, "GET", "/api/session/start", "", 405) == "method_not_allowed");
  CHECK(error_code(svc, "GET", "/api/nothing", "", 404) == "not_found");
  CHECK(error_code(svc, "GET", "/api/analysis/report", "", 404) == "no_analysis");

  st = call(svc, "POST", "/api/session/start", {{"subject_id", "S02"}, {"duration_s", 2.0}});
  CHECK(st.at("state") == "running");
  CHECK(st.at("subject_id") == "S02");
  CHECK(error_code(svc, "POST", "/api/session/start", "{}", 409) == "session_active");
  CHECK(error_code(svc, "POST", "/api/session/condition", R"({"condition":"assisted"})", 409) == "condition_locked");
  CHECK(error_code(svc, "POST", "/api/session/assist_level", R"({"level":0.4})", 409) == "assist_inactive");
  REQUIRE(wait_idle(svc));

  st = call(svc, "GET", "/api/session/state");
  CHECK(st.at("sessions_completed") == 1);
  CHECK(st.at("last_error") == "");
  CHECK(st.at("last_session") == "S02/push_extend_baseline_t0");
  const auto rec = session::load_session(tmp.path() / "S02" / "push_extend_baseline_t0");
  CHECK(rec.task.duration_s == 2.0);
  CHECK(session::read_text(tmp.path() / "sessions.txt") == "S02/push_extend_baseline_t0\n");

  st = call(svc, "POST", "/api/session/condition", {{"condition", "assisted"}});
  CHECK(st.at("assist_active") == true);
  st = call(svc, "POST", "/api/session/assist_level", {{"level", 0.8}});
  CHECK(st.at("assist_level") == 0.8);
  CHECK(error_code(svc, "POST", "/api/session/assist_level", R"({"level":1.5})", 400) == "bad_request");
  CHECK(error_code(svc, "POST", "/api/session/condition", R"({"condition":7})", 400) == "bad_request");
  CHECK(call(svc, "POST", "/api/safety/reset").at("reset_requested") == true);
}

TEST_CASE("stopping mid-run leaves one truncated record") {
  TempDir tmp;
  service::Service svc(service_config(tmp.path()));
  call(svc, "POST", "/api/session/start", {{"duration_s", 30.0}, {"condition", "assisted"}});
  std::this_thread::sleep_for(700ms);
  CHECK(call(svc, "POST", "/api/session/stop").at("state") == "stopping");
  REQUIRE(wait_idle(svc, 10s));
  const auto dirs = session::find_sessions(tmp.path());
  REQUIRE(dirs.size() == 1);
  const auto rec = session::load_session(dirs.front());
  CHECK(rec.task.duration_s < 5.0);
  CHECK(rec.condition == Condition::assisted);
  // A second run of the same kind gets the next trial number.
  call(svc, "POST", "/api/session/start", {{"duration_s", 1.0}});
  REQUIRE(wait_idle(svc, 10s));
  CHECK(svc.state().at("last_session") == "S01/push_extend_assisted_t1");
}

TEST_CASE("telemetry socket streams frames and answers control messages") {
  TempDir tmp;
  auto cfg = service_config(tmp.path());
  service::Service svc(cfg);
  const auto port = svc.start();
  CHECK(port != 0);

  const auto [status, body] = http_get(port, "/api/session/state");
  CHECK(status == 200);
  CHECK(json::parse(body).at("state") == "idle");
  CHECK(http_get(port, "/api/unknown").first == 404);

  WsClient ws(port);
  const auto hello = ws.read();
  CHECK(hello.at("type") == "session_state");
  CHECK(hello.at("seq").is_null());

  std::vector<json> log;
  ws.send("not json");
  CHECK(ws.read_until("error", log).at("payload").at("code") == "malformed_message");
  ws.send(R"({"type":"control","action":"dance","seq":3})");
  auto e = ws.read_until("error", log);
  CHECK(e.at("payload").at("code") == "unknown_action");
  CHECK(e.at("seq") == 3);
  ws.send(R"({"type":"control","action":"stop","seq":4})");
  CHECK(ws.read_until("error", log).at("payload").at("code") == "no_active_session");

  ws.send(R"({"type":"control","action":"start","seq":5,"payload":{"condition":"assisted","duration_s":2}})");
  const auto ack = ws.read_until("ack", log);
  CHECK(ack.at("seq") == 5);
  CHECK(ack.at("payload").at("state") == "running");

  // Collect until the final idle state arrives.
  log.clear();
  const auto started = std::chrono::steady_clock::now();
  for (;;) {
    auto m = ws.read();
    log.push_back(m);
    if (m.at("type") == "session_state" && m.at("payload").at("state") == "idle") break;
    REQUIRE(std::chrono::steady_clock::now() - started < 30s);
  }
  int frames = 0;
  std::set<std::string> types;
  std::int64_t last_seq = -1;
  for (const auto& m : log) {
    types.insert(m.at("type").get<std::string>());
    if (m.at("type") == "frame") ++frames;
    if (m.at("seq").is_number()) {
      const auto seq = m.at("seq").get<std::int64_t>();
      CHECK(seq > last_seq);
      last_seq = seq;
    }
  }
  // 2 s at 25 Hz.
  CHECK(frames == 50);
  CHECK(types.count("frame"));
  CHECK(svc.state().at("sessions_completed") == 1);
  svc.stop();
}

TEST_CASE("analysis downloads match the report command output") {
  TempDir tmp;
  auto cfg = service_config(tmp.path());
  cfg.run_loop = false;
  commands::cmd_simulate(cfg);
  commands::cmd_analyze(tmp.path(), cfg.analysis);
  const auto files = commands::cmd_report(tmp.path());

  service::Service svc(cfg);
  const auto port = svc.start();
  const auto csv = svc.handle("GET", "/api/analysis/summary.csv", "");
  CHECK(csv.status == 200);
  CHECK(csv.content_type == "text/csv");
  CHECK(csv.body == session::read_text(files.plot_outcomes));
  CHECK(http_get(port, "/api/analysis/summary.csv").second == session::read_text(files.plot_outcomes));
  CHECK(http_get(port, "/api/analysis/trajectories.csv").second == session::read_text(files.trajectories));
  const auto rep = json::parse(http_get(port, "/api/analysis/report").second);
  CHECK(rep.at("outcomes").size() == 4);
  svc.stop();
}
