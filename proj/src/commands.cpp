#include "armassist/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "armassist/errors.hpp"
#include "armassist/metrics.hpp"
#include "armassist/persist.hpp"
#include "armassist/session.hpp"

namespace armassist::commands {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kIndexFile = "sessions.txt";

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  return stats::median(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

ordered_json read_json(const fs::path& path) {
  try {
    return ordered_json::parse(session::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

std::vector<fs::path> listed_sessions(const fs::path& root) {
  const auto index = root / kIndexFile;
  if (!fs::exists(index)) return session::find_sessions(root);
  std::vector<fs::path> dirs;
  std::istringstream in(session::read_text(index));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) dirs.push_back(root / line);
  return dirs;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Keeps only packets that finished within the first `seconds`.
void truncate(SessionRecord& rec, double seconds) {
  for (auto& [kind, stream] : rec.channels) {
    auto& pk = stream.packets;
    const double span = stream.config.packet_duration_s();
    pk.erase(std::remove_if(pk.begin(), pk.end(),
                            [&](const SamplePacket& p) { return p.hub_timestamp_s + span > seconds + 1e-9; }),
             pk.end());
  }
  rec.task.duration_s = seconds;
  std::erase_if(rec.task.perturbations, [&](const Perturbation& p) { return p.time_s >= seconds; });
}

}  // namespace

signalgen::CohortCalibration load_calibration(const RunConfig& config) {
  if (config.calibration_path.empty()) return {};
  return signalgen::CohortCalibration::load(config.calibration_path);
}

SessionRun run_session(const signalgen::SubjectProfile& profile, TaskKind task, Condition condition, int trial,
                       const RunConfig& config, const fs::path& root, const SessionHooks& hooks) {
  SessionRun run;
  run.record = signalgen::generate_session(profile, default_task(task, config.duration_s), condition,
                                           signalgen::default_channels(), trial);
  auto& rec = run.record;

  if (config.run_loop) {
    const auto view = session::synchronize(rec.channels);
    assist::LoopOptions lo;
    lo.duration_s = config.duration_s;
    lo.assist_level = condition == Condition::assisted ? hooks.assist_level.value_or(config.assist_level) : 0.0;
    lo.realtime = hooks.realtime;
    lo.telemetry = hooks.telemetry;
    lo.stop = hooks.stop;
    lo.safety = hooks.safety;
    if (condition == Condition::assisted) lo.live_assist_level = hooks.live_assist_level;
    lo.reset_request = hooks.reset_request;
    lo.on_command = hooks.on_command;
    run.loop = assist::run_loop(view, task, assist::LogisticNeedModel{}, config.envelope, config.gains, lo);
    const double ran_s = static_cast<double>(run.loop->stats.ticks) / lo.loop_rate_hz;
    if (ran_s + 1e-9 < config.duration_s) truncate(rec, ran_s);
  }

  rec.qc = session::run_qc(rec, config.mad_threshold);
  if (!rec.qc.excluded) {
    metrics::OutcomeOptions oo;
    oo.pipeline.mains_hz = config.mains_hz;
    try {
      rec.outcomes = metrics::session_outcomes(rec, oo);
    } catch (const InsufficientDataError& e) {
      rec.qc.excluded = true;
      rec.qc.exclusion_reason = std::string("outcomes unavailable: ") + e.what();
    } catch (const SpectrumError& e) {
      rec.qc.excluded = true;
      rec.qc.exclusion_reason = std::string("outcomes unavailable: ") + e.what();
    } catch (const ValidationError& e) {
      // e.g. a stopped session too short for rep counting
      rec.qc.excluded = true;
      rec.qc.exclusion_reason = std::string("outcomes unavailable: ") + e.what();
    }
  }
  run.directory = session::persist(rec, root).directory;
  if (run.loop) assist::write_loop_artifacts(*run.loop, run.directory);
  return run;
}

SimulateResult cmd_simulate(const RunConfig& config) {
  config.validate();
  const fs::path& root = config.output_root;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw IoError("cannot create output root " + root.string());
  fs::remove(root / "summary.csv", ec);
  session::write_text(root / "run_config.txt", config.to_text());

  const auto cohort = signalgen::generate_cohort(config.cohort_size, load_calibration(config), config.seed);
  SimulateResult result;
  std::string index, schedule = "subject_id,visit,task,condition,trial\n";
  for (std::size_t s = 0; s < cohort.size(); ++s) {
    std::vector<Condition> order = {Condition::baseline, Condition::assisted};
    if (config.condition_order == ConditionOrder::randomized) {
      std::mt19937_64 rng(cohort[s].rng_seed ^ 0x0D0E0ULL);
      if (std::bernoulli_distribution(0.5)(rng)) std::swap(order[0], order[1]);
    }
    int visit = 0;
    for (Condition c : order) {
      for (TaskKind t : config.tasks) {
        for (int trial = 0; trial < config.trials_per_task; ++trial) {
          const auto run = run_session(cohort[s], t, c, trial, config, root);
          ++result.sessions;
          if (run.record.qc.excluded) ++result.excluded;
          result.session_dirs.push_back(run.directory);
          index += fs::relative(run.directory, root).generic_string() + "\n";
          schedule += cohort[s].id + "," + std::to_string(visit++) + "," + std::string(to_string(t)) + "," +
                      std::string(to_string(c)) + "," + std::to_string(trial) + "\n";
        }
      }
    }
  }
  session::write_text(root / kIndexFile, index);
  session::write_text(root / "schedule.csv", schedule);
  return result;
}

report::Report cmd_analyze(const fs::path& root, const report::AnalysisOptions& options) {
  options.validate();
  const auto csv = root / "summary.csv";
  if (!fs::exists(csv)) throw InsufficientDataError("no summary.csv under " + root.string());
  const auto rows = session::read_summary(csv);

  report::TechEndpoints tech;
  std::vector<std::string> excluded;
  std::vector<double> rates, medians, p95s;
  for (const auto& dir : listed_sessions(root)) {
    const auto manifest = read_json(dir / "manifest.json");
    ++tech.sessions;
    const std::string name = fs::relative(dir, root).generic_string();
    const auto& qc = manifest.at("qc");
    if (qc.at("excluded").get<bool>()) excluded.push_back(name + ": " + qc.at("exclusion_reason").get<std::string>());
    const auto stats_path = dir / "loop_stats.json";
    if (!fs::exists(stats_path)) continue;
    const auto ls = read_json(stats_path);
    const double rate = ls.at("loop_rate_hz").get<double>();
    const auto expected = static_cast<std::size_t>(std::floor(manifest.at("task").at("duration_s").get<double>() * rate + 1e-9));
    if (ls.at("ticks").get<std::size_t>() == expected) ++tech.completed_sessions;
    rates.push_back(rate);
    medians.push_back(ls.at("median_latency_ms").get<double>());
    p95s.push_back(ls.at("p95_latency_ms").get<double>());
    tech.missed_deadlines += ls.at("missed_deadlines").get<std::size_t>();
    tech.safety_interventions += ls.at("safety_overrides").get<std::size_t>();
    if (ls.at("disengaged").get<bool>()) ++tech.stall_cuts;
  }
  tech.loop_rate_hz = median_of(rates);
  tech.median_latency_ms = median_of(medians);
  tech.p95_latency_ms = median_of(p95s);

  auto rep = report::build_report(rows, options, tech, excluded);
  const auto out = root / "analysis";
  session::write_text(out / "report.json", report::to_json(rep).dump(2) + "\n");
  session::write_text(out / "report.txt", report::render_text(rep));
  return rep;
}

std::string plot_outcomes_csv(const report::Report& r) {
  std::string s = "series,unit,condition,median,q1,q3\n";
  for (const auto& o : r.outcomes) {
    if (!o.has_levels) continue;
    s += o.key + "," + o.unit + ",baseline," + fmt6(o.baseline_median) + "," + fmt6(o.baseline_q1) + "," +
         fmt6(o.baseline_q3) + "\n";
    s += o.key + "," + o.unit + ",assisted," + fmt6(o.assisted_median) + "," + fmt6(o.assisted_q1) + "," +
         fmt6(o.assisted_q3) + "\n";
  }
  return s;
}

std::string trajectories_csv(const report::Report& r) {
  std::string s = "subject_id,condition,ti,rom_deg,reps_per_min,fmed_slope_hz_per_min\n";
  auto row = [&](const std::string& id, const char* cond, const stats::ConditionValues& v) {
    s += id + "," + cond + "," + fmt6(v.ti) + "," + fmt6(v.rom_deg) + "," + fmt6(v.reps_per_min) + "," +
         fmt6(v.fmed_slope) + "\n";
  };
  for (const auto& subj : r.subjects) {
    row(subj.id, "baseline", subj.baseline);
    row(subj.id, "assisted", subj.assisted);
  }
  return s;
}

ReportFiles cmd_report(const fs::path& root) {
  const auto path = root / "analysis" / "report.json";
  if (!fs::exists(path)) throw IoError("no analysis at " + path.string() + "; run analyze first");
  const auto rep = report::report_from_json(read_json(path));
  ReportFiles files;
  files.plot_outcomes = root / "analysis" / "plot_outcomes.csv";
  files.trajectories = root / "analysis" / "trajectories.csv";
  session::write_text(files.plot_outcomes, plot_outcomes_csv(rep));
  session::write_text(files.trajectories, trajectories_csv(rep));
  files.text = report::render_text(rep);
  return files;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const CorruptStreamError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 3;
  if (dynamic_cast<const InsufficientDataError*>(&e) || dynamic_cast<const SpectrumError*>(&e)) return 4;
  return 1;
}

}  // namespace armassist::commands
