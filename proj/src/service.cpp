#include "armassist/service.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <deque>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "armassist/commands.hpp"
#include "armassist/errors.hpp"
#include "armassist/persist.hpp"
#include "armassist/telemetry.hpp"

namespace armassist::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

struct ApiError {
  int status;
  std::string code;
  std::string message;
};

json error_body(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

class WsSession;

// Fan-out to connected sockets. Sessions hold their own bounded queues, so a
// slow client never holds up the producer.
class Hub {
 public:
  void join(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(mutex_);
    sessions_.push_back(s);
  }
  void broadcast(const std::shared_ptr<const std::string>& msg);
  // Only once the io thread has stopped: drops every socket so clients see EOF.
  void close_all();

 private:
  std::mutex mutex_;
  std::vector<std::weak_ptr<WsSession>> sessions_;
};

using Dispatch = std::function<HttpReply(const std::string&, const std::string&, const std::string&)>;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  static constexpr std::size_t kQueueLimit = 256;

  WsSession(tcp::socket&& socket, Hub& hub, Dispatch dispatch, std::function<json()> state)
      : ws_(std::move(socket)), hub_(hub), dispatch_(std::move(dispatch)), state_(std::move(state)) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  void close_socket() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

  void send(std::shared_ptr<const std::string> msg) {
    net::post(ws_.get_executor(), [self = shared_from_this(), msg = std::move(msg)] { self->enqueue(msg); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    hub_.join(shared_from_this());
    enqueue(std::make_shared<const std::string>(
        json{{"type", "session_state"}, {"seq", nullptr}, {"payload", state_()}}.dump()));
    do_read();
  }

  void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    enqueue(std::make_shared<const std::string>(handle_control(text)));
    do_read();
  }

  // {"type": "control", "action": ..., "seq": n, "payload": {...}}
  std::string handle_control(const std::string& text) {
    static const std::map<std::string, std::pair<std::string, std::string>> routes = {
        {"start", {"POST", "/api/session/start"}},
        {"stop", {"POST", "/api/session/stop"}},
        {"condition", {"POST", "/api/session/condition"}},
        {"assist_level", {"POST", "/api/session/assist_level"}},
        {"safety_reset", {"POST", "/api/safety/reset"}},
        {"state", {"GET", "/api/session/state"}},
    };
    json seq = nullptr;
    auto err = [&](const std::string& code, const std::string& message) {
      return json{{"type", "error"}, {"seq", seq}, {"payload", error_body(code, message)["error"]}}.dump();
    };
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::parse_error&) {
      return err("malformed_message", "control message is not JSON");
    }
    if (!msg.is_object()) return err("malformed_message", "control message must be an object");
    if (msg.contains("seq")) seq = msg["seq"];
    if (msg.value("type", "") != "control" || !msg.contains("action") || !msg["action"].is_string())
      return err("malformed_message", "expected {\"type\": \"control\", \"action\": ...}");
    const auto it = routes.find(msg["action"].get<std::string>());
    if (it == routes.end()) return err("unknown_action", "unknown action '" + msg["action"].get<std::string>() + "'");
    const std::string body = msg.contains("payload") ? msg["payload"].dump() : "";
    const auto reply = dispatch_(it->second.first, it->second.second, body);
    const auto payload = json::parse(reply.body);
    if (reply.status >= 400) return json{{"type", "error"}, {"seq", seq}, {"payload", payload.at("error")}}.dump();
    return json{{"type", "ack"}, {"seq", seq}, {"payload", payload}}.dump();
  }

  void enqueue(std::shared_ptr<const std::string> msg) {
    if (queue_.size() >= kQueueLimit) queue_.erase(queue_.begin() + (writing_ ? 1 : 0));  // drop oldest unsent
    queue_.push_back(std::move(msg));
    if (!writing_) do_write();
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) return;
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  Hub& hub_;
  Dispatch dispatch_;
  std::function<json()> state_;
};

void Hub::broadcast(const std::shared_ptr<const std::string>& msg) {
  std::lock_guard lock(mutex_);
  std::erase_if(sessions_, [](const std::weak_ptr<WsSession>& w) { return w.expired(); });
  for (const auto& w : sessions_)
    if (auto s = w.lock()) s->send(msg);
}

void Hub::close_all() {
  std::lock_guard lock(mutex_);
  for (const auto& w : sessions_)
    if (auto s = w.lock()) s->close_socket();
  sessions_.clear();
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Hub& hub, Dispatch dispatch, std::function<json()> state)
      : stream_(std::move(socket)), hub_(hub), dispatch_(std::move(dispatch)), state_(std::move(state)) {}

  void run() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/telemetry") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), hub_, dispatch_, state_)->run(std::move(req_));
        return;
      }
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::server, "armassist");
    res->set(http::field::access_control_allow_origin, "*");
    if (req_.method() == http::verb::options) {
      res->result(http::status::no_content);
      res->set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
      res->set(http::field::access_control_allow_headers, "Content-Type");
    } else {
      const auto reply = dispatch_(std::string(req_.method_string()), std::string(req_.target()), req_.body());
      res->result(static_cast<http::status>(reply.status));
      res->set(http::field::content_type, reply.content_type);
      res->body() = reply.body;
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code wec, std::size_t) {
      if (wec) return;
      if (res->need_eof()) {
        beast::error_code sec;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, sec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  Hub& hub_;
  Dispatch dispatch_;
  std::function<json()> state_;
};

}  // namespace

struct Service::Impl {
  enum class Phase { idle, running, stopping };

  explicit Impl(RunConfig c)
      : config(std::move(c)),
        cohort(signalgen::generate_cohort(config.cohort_size, commands::load_calibration(config), config.seed)),
        packetizer(queue, config.ui_rate_hz, 100.0),
        level(config.assist_level) {}

  RunConfig config;
  std::vector<signalgen::SubjectProfile> cohort;
  telemetry::TelemetryQueue queue{512};
  telemetry::Packetizer packetizer;

  mutable std::mutex mutex;  // control state below
  Phase phase = Phase::idle;
  std::string subject;
  TaskKind task = TaskKind::push_extend;
  Condition condition = Condition::baseline;
  int trial = 0;
  double duration_s = 0.0;
  std::string last_session, last_error;
  std::size_t completed = 0;
  std::thread worker;

  std::atomic<double> level;
  std::atomic<bool> stop_flag{false}, reset_flag{false}, engaged{true};
  std::atomic<double> t_s{0.0};

  net::io_context ioc{1};
  std::optional<tcp::acceptor> acceptor;
  Hub hub;
  std::thread io_thread, fanout_thread;
  std::atomic<bool> serving{false};

  static const char* phase_name(Phase p) {
    return p == Phase::running ? "running" : p == Phase::stopping ? "stopping" : "idle";
  }

  json state_locked() const {
    json j;
    j["state"] = phase_name(phase);
    j["subject_id"] = subject.empty() ? cohort.front().id : subject;
    j["task"] = std::string(to_string(task));
    j["condition"] = std::string(to_string(condition));
    j["trial"] = trial;
    j["assist_level"] = level.load();
    j["assist_active"] = condition == Condition::assisted;
    j["engaged"] = engaged.load();
    j["t_s"] = t_s.load();
    j["sessions_completed"] = completed;
    j["last_session"] = last_session;
    j["last_error"] = last_error;
    j["telemetry_dropped"] = queue.dropped();
    return j;
  }

  json state() const {
    std::lock_guard lock(mutex);
    return state_locked();
  }

  void publish() { packetizer.publish_state(state()); }

  const signalgen::SubjectProfile& profile(const std::string& id) const {
    for (const auto& p : cohort)
      if (p.id == id) return p;
    throw ApiError{400, "unknown_subject", "no subject '" + id + "' in the configured cohort"};
  }

  int free_trial(const std::string& id, TaskKind t, Condition c) const {
    for (int k = 0;; ++k) {
      SessionRecord probe;
      probe.subject_id = id;
      probe.task.kind = t;
      probe.condition = c;
      probe.trial = k;
      if (!std::filesystem::exists(config.output_root / session::session_relative_dir(probe))) return k;
    }
  }

  json start(const json& body) {
    std::thread previous;
    {
      std::lock_guard lock(mutex);
      if (phase != Phase::idle) throw ApiError{409, "session_active", "a session is already running"};
      previous = std::move(worker);
    }
    // The finished worker may still be publishing its final state; join without the lock.
    if (previous.joinable()) previous.join();
    {
      std::lock_guard lock(mutex);
      if (phase != Phase::idle) throw ApiError{409, "session_active", "a session is already running"};
      const std::string id = body.value("subject_id", cohort.front().id);
      profile(id);
      TaskKind t = task;
      if (body.contains("task")) t = parse_task_kind(body.at("task").get<std::string>());
      Condition c = condition;
      if (body.contains("condition")) c = parse_condition(body.at("condition").get<std::string>());
      double d = body.value("duration_s", config.duration_s);
      if (!(d >= 1.0 && d <= 3600.0)) throw ApiError{400, "bad_request", "duration_s must be in [1, 3600]"};
      int tr = body.contains("trial") ? body.at("trial").get<int>() : free_trial(id, t, c);
      if (tr < 0) throw ApiError{400, "bad_request", "trial must be >= 0"};
      subject = id;
      task = t;
      condition = c;
      trial = tr;
      duration_s = d;
      phase = Phase::running;
      last_error.clear();
      stop_flag = false;
      reset_flag = false;
      engaged = true;
      t_s = 0.0;
      packetizer.begin_session();
      worker = std::thread([this] { run_worker(); });
    }
    publish();
    return state();
  }

  void run_worker() {
    RunConfig cfg = config;
    cfg.duration_s = duration_s;
    commands::SessionHooks hooks;
    hooks.telemetry = &packetizer;
    hooks.stop = &stop_flag;
    hooks.realtime = true;
    hooks.live_assist_level = &level;
    hooks.reset_request = &reset_flag;
    hooks.on_command = [this](const AssistCommand& c) {
      engaged = c.engaged;
      t_s = c.t_s;
    };
    std::string dir, error;
    try {
      const auto run = commands::run_session(profile(subject), task, condition, trial, cfg, config.output_root, hooks);
      dir = std::filesystem::relative(run.directory, config.output_root).generic_string();
      session::append_text(config.output_root / "sessions.txt", dir + "\n");
    } catch (const std::exception& e) {
      error = e.what();
    } catch (const ApiError& e) {
      error = e.message;
    }
    {
      std::lock_guard lock(mutex);
      phase = Phase::idle;
      if (error.empty()) {
        last_session = dir;
        ++completed;
      }
      last_error = error;
    }
    publish();
  }

  json stop() {
    {
      std::lock_guard lock(mutex);
      if (phase != Phase::running) throw ApiError{409, "no_active_session", "no session is running"};
      phase = Phase::stopping;
      stop_flag = true;
    }
    publish();
    return state();
  }

  json set_condition(const json& body) {
    if (!body.contains("condition") || !body["condition"].is_string())
      throw ApiError{400, "bad_request", "expected {\"condition\": \"baseline\" | \"assisted\"}"};
    const Condition c = parse_condition(body["condition"].get<std::string>());
    {
      std::lock_guard lock(mutex);
      if (phase != Phase::idle)
        throw ApiError{409, "condition_locked", "the condition is fixed for the whole session; stop it first"};
      condition = c;
    }
    publish();
    return state();
  }

  json set_assist_level(const json& body) {
    if (!body.contains("level") || !body["level"].is_number())
      throw ApiError{400, "bad_request", "expected {\"level\": number in [0, 1]}"};
    const double v = body["level"].get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw ApiError{400, "bad_request", "assist level must be in [0, 1]"};
    {
      std::lock_guard lock(mutex);
      if (condition != Condition::assisted)
        throw ApiError{409, "assist_inactive", "assistance is off in the baseline condition"};
      level = v;
    }
    publish();
    return state();
  }

  json safety_reset() {
    {
      std::lock_guard lock(mutex);
      if (phase == Phase::running) reset_flag = true;
      else engaged = true;
    }
    json j = state();
    j["reset_requested"] = true;
    return j;
  }

  HttpReply file_reply(const std::filesystem::path& path, const std::string& type) const {
    if (!std::filesystem::exists(path))
      throw ApiError{404, "no_analysis", "run analyze and report against " + config.output_root.string() + " first"};
    return {200, type, session::read_text(path)};
  }

  HttpReply dispatch(const std::string& method, const std::string& raw_target, const std::string& body) {
    const std::string target = raw_target.substr(0, raw_target.find('?'));
    try {
      json in = json::object();
      if (!body.empty()) {
        try {
          in = json::parse(body);
        } catch (const json::parse_error&) {
          throw ApiError{400, "malformed_json", "request body is not JSON"};
        }
        if (!in.is_object()) throw ApiError{400, "malformed_json", "request body must be a JSON object"};
      }
      const auto analysis = config.output_root / "analysis";
      auto ok = [](const json& j) { return HttpReply{200, "application/json", j.dump()}; };
      static const std::map<std::string, std::string> methods = {
          {"/api/session/start", "POST"},        {"/api/session/stop", "POST"},
          {"/api/session/condition", "POST"},    {"/api/session/assist_level", "POST"},
          {"/api/safety/reset", "POST"},         {"/api/session/state", "GET"},
          {"/api/analysis/report", "GET"},       {"/api/analysis/summary.csv", "GET"},
          {"/api/analysis/trajectories.csv", "GET"},
      };
      const auto route = methods.find(target);
      if (route == methods.end()) throw ApiError{404, "not_found", "no endpoint " + target};
      if (route->second != method) throw ApiError{405, "method_not_allowed", target + " expects " + route->second};
      if (target == "/api/session/start") return ok(start(in));
      if (target == "/api/session/stop") return ok(stop());
      if (target == "/api/session/condition") return ok(set_condition(in));
      if (target == "/api/session/assist_level") return ok(set_assist_level(in));
      if (target == "/api/safety/reset") return ok(safety_reset());
      if (target == "/api/session/state") return ok(state());
      if (target == "/api/analysis/report") return file_reply(analysis / "report.json", "application/json");
      if (target == "/api/analysis/summary.csv") return file_reply(analysis / "plot_outcomes.csv", "text/csv");
      return file_reply(analysis / "trajectories.csv", "text/csv");
    } catch (const ApiError& e) {
      return {e.status, "application/json", error_body(e.code, e.message).dump()};
    } catch (const ValidationError& e) {
      return {400, "application/json", error_body("bad_request", e.what()).dump()};
    } catch (const json::exception& e) {
      return {400, "application/json", error_body("bad_request", e.what()).dump()};
    } catch (const std::exception& e) {
      return {500, "application/json", error_body("internal", e.what()).dump()};
    }
  }

  void do_accept() {
    acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<HttpSession>(
          std::move(socket), hub,
          [this](const std::string& m, const std::string& t, const std::string& b) { return dispatch(m, t, b); },
          [this] { return state(); })
          ->run();
      do_accept();
    });
  }
};

Service::Service(RunConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

unsigned short Service::start() {
  auto& d = *impl_;
  if (d.serving) throw ValidationError("service already started");
  beast::error_code ec;
  const auto addr = net::ip::make_address(d.config.host, ec);
  if (ec) throw ValidationError("bad host address '" + d.config.host + "'");
  d.acceptor.emplace(d.ioc);
  const tcp::endpoint ep(addr, static_cast<unsigned short>(d.config.port));
  d.acceptor->open(ep.protocol(), ec);
  if (!ec) d.acceptor->set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) d.acceptor->bind(ep, ec);
  if (!ec) d.acceptor->listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw IoError("cannot listen on " + d.config.host + ":" + std::to_string(d.config.port) + ": " + ec.message());
  std::error_code fec;
  std::filesystem::create_directories(d.config.output_root, fec);
  if (fec) throw IoError("cannot create " + d.config.output_root.string());

  d.serving = true;
  d.do_accept();
  d.io_thread = std::thread([&d] { d.ioc.run(); });
  d.fanout_thread = std::thread([&d] {
    while (d.serving) {
      if (auto msg = d.queue.pop_for(std::chrono::milliseconds(20)))
        d.hub.broadcast(std::make_shared<const std::string>(std::move(*msg)));
    }
  });
  return d.acceptor->local_endpoint().port();
}

void Service::stop() {
  auto& d = *impl_;
  d.stop_flag = true;
  if (d.worker.joinable()) d.worker.join();
  if (!d.serving.exchange(false)) return;
  net::post(d.ioc, [&d] {
    beast::error_code ec;
    d.acceptor->close(ec);
  });
  d.ioc.stop();
  if (d.io_thread.joinable()) d.io_thread.join();
  if (d.fanout_thread.joinable()) d.fanout_thread.join();
  d.hub.close_all();
}

HttpReply Service::handle(const std::string& method, const std::string& target, const std::string& body) {
  return impl_->dispatch(method, target, body);
}

json Service::state() const { return impl_->state(); }

namespace {
std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }
}  // namespace

int cmd_serve(const RunConfig& config) {
  config.validate();
  Service svc(config);
  const auto port = svc.start();
  std::cout << "serving on http://" << config.host << ":" << port << " (telemetry at ws://" << config.host << ":"
            << port << "/telemetry)" << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  svc.stop();
  return 0;
}

}  // namespace armassist::service
