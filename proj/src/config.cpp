#include "armassist/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "armassist/errors.hpp"
#include "armassist/persist.hpp"

namespace armassist {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ValidationError("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ValidationError("config key '" + key + "': '" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"cohort_size", [](RunConfig& c, auto& k, auto& v) { c.cohort_size = to_int<int>(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_int<std::uint64_t>(k, v); }},
      {"tasks", [](RunConfig& c, auto&, auto& v) { c.tasks = parse_task_list(v); }},
      {"condition_order", [](RunConfig& c, auto&, auto& v) { c.condition_order = parse_condition_order(v); }},
      {"trials_per_task", [](RunConfig& c, auto& k, auto& v) { c.trials_per_task = to_int<int>(k, v); }},
      {"duration_s", [](RunConfig& c, auto& k, auto& v) { c.duration_s = to_double(k, v); }},
      {"mains_hz", [](RunConfig& c, auto& k, auto& v) { c.mains_hz = to_double(k, v); }},
      {"mad_threshold", [](RunConfig& c, auto& k, auto& v) { c.mad_threshold = to_double(k, v); }},
      {"calibration", [](RunConfig& c, auto&, auto& v) { c.calibration_path = v; }},
      {"torque_max", [](RunConfig& c, auto& k, auto& v) { c.envelope.torque_max = to_double(k, v); }},
      {"jerk_max", [](RunConfig& c, auto& k, auto& v) { c.envelope.jerk_max = to_double(k, v); }},
      {"angle_min_deg", [](RunConfig& c, auto& k, auto& v) { c.envelope.angle_min_deg = to_double(k, v); }},
      {"angle_max_deg", [](RunConfig& c, auto& k, auto& v) { c.envelope.angle_max_deg = to_double(k, v); }},
      {"stall_velocity_dps", [](RunConfig& c, auto& k, auto& v) { c.envelope.stall_velocity_dps = to_double(k, v); }},
      {"stall_torque_frac", [](RunConfig& c, auto& k, auto& v) { c.envelope.stall_torque_frac = to_double(k, v); }},
      {"stall_timeout_s", [](RunConfig& c, auto& k, auto& v) { c.envelope.stall_timeout_s = to_double(k, v); }},
      {"kp", [](RunConfig& c, auto& k, auto& v) { c.gains.kp = to_double(k, v); }},
      {"kd", [](RunConfig& c, auto& k, auto& v) { c.gains.kd = to_double(k, v); }},
      {"assist_level", [](RunConfig& c, auto& k, auto& v) { c.assist_level = to_double(k, v); }},
      {"run_loop", [](RunConfig& c, auto& k, auto& v) { c.run_loop = to_bool(k, v); }},
      {"output_root", [](RunConfig& c, auto&, auto& v) { c.output_root = v; }},
      {"host", [](RunConfig& c, auto&, auto& v) { c.host = v; }},
      {"port", [](RunConfig& c, auto& k, auto& v) { c.port = to_int<int>(k, v); }},
      {"ui_rate_hz", [](RunConfig& c, auto& k, auto& v) { c.ui_rate_hz = to_double(k, v); }},
      {"b_resamples", [](RunConfig& c, auto& k, auto& v) { c.analysis.b_resamples = to_int<int>(k, v); }},
      {"analysis_seed", [](RunConfig& c, auto& k, auto& v) { c.analysis.seed = to_int<std::uint64_t>(k, v); }},
      {"trim", [](RunConfig& c, auto& k, auto& v) { c.analysis.trim = to_double(k, v); }},
      {"task_resamples", [](RunConfig& c, auto& k, auto& v) { c.analysis.task_resamples = to_int<int>(k, v); }},
      {"thresholds", [](RunConfig& c, auto&, auto& v) { c.analysis.thresholds = stats::ResponderThresholds::parse(v); }},
  };
  return table;
}

}  // namespace

std::vector<TaskKind> parse_task_list(const std::string& text) {
  std::vector<TaskKind> tasks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) tasks.push_back(parse_task_kind(trim(item)));
  return tasks;
}

std::string_view to_string(ConditionOrder order) {
  return order == ConditionOrder::randomized ? "randomized" : "baseline_first";
}

ConditionOrder parse_condition_order(std::string_view text) {
  if (text == "baseline_first") return ConditionOrder::baseline_first;
  if (text == "randomized") return ConditionOrder::randomized;
  throw ValidationError("unknown condition order '" + std::string(text) + "'");
}

void RunConfig::validate() const {
  if (cohort_size < 1 || cohort_size > 999) throw ValidationError("cohort_size must be in [1, 999]");
  if (tasks.empty()) throw ValidationError("at least one task is required");
  if (std::set<TaskKind>(tasks.begin(), tasks.end()).size() != tasks.size())
    throw ValidationError("tasks must not repeat");
  if (trials_per_task < 1) throw ValidationError("trials_per_task must be positive");
  if (!(duration_s >= 10.0 && duration_s <= 3600.0)) throw ValidationError("duration_s must be in [10, 3600]");
  if (mains_hz != 50.0 && mains_hz != 60.0) throw ValidationError("mains_hz must be 50 or 60");
  if (!(mad_threshold > 0.0)) throw ValidationError("mad_threshold must be positive");
  envelope.validate();
  gains.validate();
  if (!(assist_level >= 0.0 && assist_level <= 1.0)) throw ValidationError("assist_level must be in [0, 1]");
  if (output_root.empty()) throw ValidationError("output_root is empty");
  if (port < 0 || port > 65535) throw ValidationError("port must be in [0, 65535]");
  if (!(ui_rate_hz >= 25.0 && ui_rate_hz <= 50.0)) throw ValidationError("ui_rate_hz must be in [25, 50]");
  analysis.validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  std::string task_list;
  for (std::size_t i = 0; i < tasks.size(); ++i) task_list += (i ? "," : "") + std::string(to_string(tasks[i]));
  out << "cohort_size = " << cohort_size << "\n"
      << "seed = " << seed << "\n"
      << "tasks = " << task_list << "\n"
      << "condition_order = " << to_string(condition_order) << "\n"
      << "trials_per_task = " << trials_per_task << "\n"
      << "duration_s = " << num(duration_s) << "\n"
      << "mains_hz = " << num(mains_hz) << "\n"
      << "mad_threshold = " << num(mad_threshold) << "\n";
  if (!calibration_path.empty()) out << "calibration = " << calibration_path << "\n";
  out << "torque_max = " << num(envelope.torque_max) << "\n"
      << "jerk_max = " << num(envelope.jerk_max) << "\n"
      << "angle_min_deg = " << num(envelope.angle_min_deg) << "\n"
      << "angle_max_deg = " << num(envelope.angle_max_deg) << "\n"
      << "stall_velocity_dps = " << num(envelope.stall_velocity_dps) << "\n"
      << "stall_torque_frac = " << num(envelope.stall_torque_frac) << "\n"
      << "stall_timeout_s = " << num(envelope.stall_timeout_s) << "\n"
      << "kp = " << num(gains.kp) << "\n"
      << "kd = " << num(gains.kd) << "\n"
      << "assist_level = " << num(assist_level) << "\n"
      << "run_loop = " << (run_loop ? "true" : "false") << "\n"
      << "output_root = " << output_root.string() << "\n"
      << "host = " << host << "\n"
      << "port = " << port << "\n"
      << "ui_rate_hz = " << num(ui_rate_hz) << "\n"
      << "b_resamples = " << analysis.b_resamples << "\n"
      << "analysis_seed = " << analysis.seed << "\n"
      << "trim = " << num(analysis.trim) << "\n"
      << "task_resamples = " << analysis.task_resamples << "\n"
      << "thresholds = " << analysis.thresholds.to_string() << "\n";
  return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + " is not key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ValidationError("unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ValidationError("config key '" + key + "' given twice");
    it->second(c, key, value);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(session::read_text(path)); }

}  // namespace armassist
