#include "armassist/persist.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "armassist/errors.hpp"

namespace armassist::session {

namespace {

ordered_json packet_json(const SamplePacket& pk) {
  ordered_json j;
  j["seq"] = pk.seq;
  j["t"] = pk.hub_timestamp_s;
  j["loss"] = pk.loss_flag;
  j["payload"] = pk.payload;
  return j;
}

std::string channel_file_name(ChannelKind kind) { return std::string(to_string(kind)) + ".jsonl"; }

template <typename T>
T field(const ordered_json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": bad '" + key + "': " + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void append_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path session_relative_dir(const SessionRecord& record) {
  if (record.subject_id.empty() || record.subject_id.find_first_of("/\\.") != std::string::npos)
    throw ValidationError("subject id must be non-empty and path-safe");
  return fs::path(record.subject_id) / (std::string(to_string(record.task.kind)) + "_" +
                                        std::string(to_string(record.condition)) + "_t" +
                                        std::to_string(record.trial));
}

ordered_json outcomes_json(const SessionOutcomes& o) {
  ordered_json j;
  j["ti_median"] = o.ti_median;
  j["rom_deg"] = o.rom_deg;
  j["reps_per_min"] = o.reps_per_min;
  j["fmed_slope_hz_per_min"] = o.fmed_slope_hz_per_min;
  j["rep_count"] = o.rep_count;
  j["n_windows"] = o.n_windows;
  j["n_ti_windows"] = o.n_ti_windows;
  return j;
}

SessionOutcomes outcomes_from_json(const ordered_json& j) {
  SessionOutcomes o;
  const std::string w = "outcomes";
  o.ti_median = field<double>(j, "ti_median", w);
  o.rom_deg = field<double>(j, "rom_deg", w);
  o.reps_per_min = field<double>(j, "reps_per_min", w);
  o.fmed_slope_hz_per_min = field<double>(j, "fmed_slope_hz_per_min", w);
  o.rep_count = field<int>(j, "rep_count", w);
  o.n_windows = field<std::size_t>(j, "n_windows", w);
  o.n_ti_windows = field<std::size_t>(j, "n_ti_windows", w);
  return o;
}

ordered_json qc_json(const QcSummary& qc) {
  ordered_json j;
  ordered_json miss = ordered_json::object(), clip = ordered_json::object();
  for (const auto& [k, v] : qc.missingness) miss[std::string(to_string(k))] = v;
  for (const auto& [k, v] : qc.clipping) clip[std::string(to_string(k))] = v;
  j["missingness"] = miss;
  j["clipping"] = clip;
  j["impedance_ok"] = qc.impedance_ok;
  j["outlier_window_indices"] = qc.outlier_window_indices;
  j["excluded"] = qc.excluded;
  j["exclusion_reason"] = qc.exclusion_reason;
  return j;
}

QcSummary qc_from_json(const ordered_json& j) {
  QcSummary qc;
  const std::string w = "qc";
  const auto miss = field<ordered_json>(j, "missingness", w), clip = field<ordered_json>(j, "clipping", w);
  for (const auto& [k, v] : miss.items()) qc.missingness[parse_channel_kind(k)] = v.get<double>();
  for (const auto& [k, v] : clip.items()) qc.clipping[parse_channel_kind(k)] = v.get<bool>();
  qc.impedance_ok = field<bool>(j, "impedance_ok", w);
  qc.outlier_window_indices = field<std::vector<std::size_t>>(j, "outlier_window_indices", w);
  qc.excluded = field<bool>(j, "excluded", w);
  qc.exclusion_reason = field<std::string>(j, "exclusion_reason", w);
  return qc;
}

ordered_json manifest_json(const SessionRecord& record) {
  ordered_json j;
  j["subject_id"] = record.subject_id;
  ordered_json task;
  task["kind"] = std::string(to_string(record.task.kind));
  task["duration_s"] = record.task.duration_s;
  task["cycle_rate_hz"] = record.task.cycle_rate_hz;
  ordered_json perts = ordered_json::array();
  for (const auto& p : record.task.perturbations) perts.push_back({{"time_s", p.time_s}, {"magnitude", p.magnitude}});
  task["perturbations"] = perts;
  j["task"] = task;
  j["condition"] = std::string(to_string(record.condition));
  j["trial"] = record.trial;
  j["impedance_ok"] = record.impedance_ok;
  ordered_json chans = ordered_json::array();
  for (const auto& [kind, stream] : record.channels) {
    const auto& c = stream.config;
    ordered_json cj;
    cj["kind"] = std::string(to_string(kind));
    cj["sample_rate_hz"] = c.sample_rate_hz;
    cj["resolution_bits"] = c.resolution_bits;
    cj["lsb"] = c.lsb;
    cj["samples_per_packet"] = c.samples_per_packet;
    cj["unit"] = c.unit;
    cj["file"] = channel_file_name(kind);
    cj["packets"] = stream.packets.size();
    chans.push_back(cj);
  }
  j["channels"] = chans;
  j["qc"] = qc_json(record.qc);
  j["outcomes"] = record.outcomes ? outcomes_json(*record.outcomes) : ordered_json(nullptr);
  return j;
}

Manifest persist(const SessionRecord& record, const fs::path& root) {
  Manifest m;
  m.directory = root / session_relative_dir(record);
  std::error_code ec;
  fs::create_directories(m.directory, ec);
  if (ec) throw IoError("cannot create " + m.directory.string() + ": " + ec.message());
  for (const auto& [kind, stream] : record.channels) {
    std::string text;
    for (const auto& pk : stream.packets) {
      if (pk.channel != kind) throw ValidationError("packet filed under the wrong channel");
      text += packet_json(pk).dump();
      text += '\n';
    }
    const auto path = m.directory / channel_file_name(kind);
    write_text(path, text);
    m.channel_files[kind] = path;
  }
  m.manifest_path = m.directory / "manifest.json";
  write_text(m.manifest_path, manifest_json(record).dump(2) + "\n");
  if (record.outcomes) {
    const auto csv = root / "summary.csv";
    if (!fs::exists(csv)) write_text(csv, summary_header());
    SummaryRow row{record.subject_id,
                   record.task.kind,
                   record.condition,
                   record.outcomes->ti_median,
                   record.outcomes->rom_deg,
                   record.outcomes->reps_per_min,
                   record.outcomes->fmed_slope_hz_per_min};
    append_text(csv, format_summary_row(row));
    m.summary_csv = csv;
  }
  return m;
}

SessionRecord load_session(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  ordered_json j;
  try {
    j = ordered_json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  const std::string w = manifest_path.string();
  SessionRecord r;
  r.subject_id = field<std::string>(j, "subject_id", w);
  const auto task = field<ordered_json>(j, "task", w);
  r.task.kind = parse_task_kind(field<std::string>(task, "kind", w));
  r.task.duration_s = field<double>(task, "duration_s", w);
  r.task.cycle_rate_hz = field<double>(task, "cycle_rate_hz", w);
  for (const auto& p : field<ordered_json>(task, "perturbations", w))
    r.task.perturbations.push_back({field<double>(p, "time_s", w), field<double>(p, "magnitude", w)});
  r.condition = parse_condition(field<std::string>(j, "condition", w));
  r.trial = field<int>(j, "trial", w);
  r.impedance_ok = field<bool>(j, "impedance_ok", w);
  for (const auto& cj : field<ordered_json>(j, "channels", w)) {
    ChannelStream s;
    s.config.kind = parse_channel_kind(field<std::string>(cj, "kind", w));
    s.config.sample_rate_hz = field<double>(cj, "sample_rate_hz", w);
    s.config.resolution_bits = field<int>(cj, "resolution_bits", w);
    s.config.lsb = field<double>(cj, "lsb", w);
    s.config.samples_per_packet = field<int>(cj, "samples_per_packet", w);
    s.config.unit = field<std::string>(cj, "unit", w);
    s.config.validate();
    const auto file = dir / field<std::string>(cj, "file", w);
    std::istringstream lines(read_text(file));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.empty()) continue;
      const std::string where = file.string() + ":" + std::to_string(lineno);
      ordered_json pj;
      try {
        pj = ordered_json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw CorruptStreamError(where + ": " + e.what());
      }
      SamplePacket pk;
      pk.channel = s.config.kind;
      pk.seq = field<std::uint64_t>(pj, "seq", where);
      pk.hub_timestamp_s = field<double>(pj, "t", where);
      pk.loss_flag = field<bool>(pj, "loss", where);
      pk.payload = field<std::vector<std::int32_t>>(pj, "payload", where);
      s.packets.push_back(std::move(pk));
    }
    r.channels[s.config.kind] = std::move(s);
  }
  r.qc = qc_from_json(field<ordered_json>(j, "qc", w));
  if (!j.at("outcomes").is_null()) r.outcomes = outcomes_from_json(j.at("outcomes"));
  return r;
}

std::vector<fs::path> find_sessions(const fs::path& root) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("not a directory: " + root.string());
  for (auto it = fs::recursive_directory_iterator(root, ec); it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_regular_file() && it->path().filename() == "manifest.json") out.push_back(it->path().parent_path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {"subject_id",   "task",    "condition",
                                                "ti_median",    "rom_deg", "reps_per_min",
                                                "fmed_slope_hz_per_min"};
  return cols;
}

std::string summary_header() {
  std::string h;
  for (std::size_t i = 0; i < summary_columns().size(); ++i) h += (i ? "," : "") + summary_columns()[i];
  return h + "\n";
}

std::string format_summary_row(const SummaryRow& r) {
  return r.subject_id + "," + std::string(to_string(r.task)) + "," + std::string(to_string(r.condition)) + "," +
         fmt(r.ti_median) + "," + fmt(r.rom_deg) + "," + fmt(r.reps_per_min) + "," + fmt(r.fmed_slope_hz_per_min) +
         "\n";
}

std::vector<SummaryRow> read_summary(const fs::path& csv) {
  std::istringstream in(read_text(csv));
  std::string line;
  if (!std::getline(in, line) || line + "\n" != summary_header())
    throw ValidationError(csv.string() + ": unexpected header");
  std::vector<SummaryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = csv.string() + ":" + std::to_string(lineno);
    if (cells.size() != summary_columns().size()) throw ValidationError(where + ": wrong column count");
    SummaryRow r;
    r.subject_id = cells[0];
    r.task = parse_task_kind(cells[1]);
    r.condition = parse_condition(cells[2]);
    double* nums[] = {&r.ti_median, &r.rom_deg, &r.reps_per_min, &r.fmed_slope_hz_per_min};
    for (int k = 0; k < 4; ++k) {
      std::size_t used = 0;
      try {
        *nums[k] = std::stod(cells[3 + k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[3 + k].size()) throw ValidationError(where + ": bad number '" + cells[3 + k] + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace armassist::session
