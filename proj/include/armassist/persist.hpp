#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "armassist/types.hpp"

namespace armassist::session {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct Manifest {
  fs::path directory;
  fs::path manifest_path;
  std::map<ChannelKind, fs::path> channel_files;
  std::optional<fs::path> summary_csv;
};

// <subject>/<task>_<condition>_t<trial>
fs::path session_relative_dir(const SessionRecord& record);

// One JSONL file per channel plus manifest.json; sessions with outcomes also
// append a row to <root>/summary.csv.
Manifest persist(const SessionRecord& record, const fs::path& root);
SessionRecord load_session(const fs::path& session_dir);

// Session directories under root, sorted by path.
std::vector<fs::path> find_sessions(const fs::path& root);

struct SummaryRow {
  std::string subject_id;
  TaskKind task = TaskKind::push_extend;
  Condition condition = Condition::baseline;
  double ti_median = 0.0;
  double rom_deg = 0.0;
  double reps_per_min = 0.0;
  double fmed_slope_hz_per_min = 0.0;
};

const std::vector<std::string>& summary_columns();
std::string summary_header();
std::string format_summary_row(const SummaryRow& row);
std::vector<SummaryRow> read_summary(const fs::path& csv);

ordered_json manifest_json(const SessionRecord& record);
ordered_json outcomes_json(const SessionOutcomes& o);
SessionOutcomes outcomes_from_json(const ordered_json& j);
ordered_json qc_json(const QcSummary& qc);
QcSummary qc_from_json(const ordered_json& j);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
void append_text(const fs::path& path, const std::string& text);

}  // namespace armassist::session
