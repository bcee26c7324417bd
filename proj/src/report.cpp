#include "armassist/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "armassist/errors.hpp"

namespace armassist::report {

using stats::Vec;

namespace {

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median_of(const std::vector<double>& v) {
  return stats::median(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
}

double field(const session::SummaryRow& r, const std::string& key) {
  if (key == "ti") return r.ti_median;
  if (key == "rom") return r.rom_deg;
  if (key == "reps") return r.reps_per_min;
  return r.fmed_slope_hz_per_min;
}

double field(const stats::ConditionValues& v, const std::string& key) {
  if (key == "ti") return v.ti;
  if (key == "rom") return v.rom_deg;
  if (key == "reps") return v.reps_per_min;
  return v.fmed_slope;
}

struct OutcomeDef {
  const char* key;
  const char* label;
  const char* unit;
  const char* delta_unit;
  bool has_levels;
};

const OutcomeDef kOutcomes[] = {
    {"ti", "Tremor index", "", "", true},
    {"rom", "ROM", "deg", "%", true},
    {"reps", "Reps", "/min", "/min", true},
    {"fatigue", "EMG fmed slope", "Hz/min", "Hz/min", false},
};

}  // namespace

const char* footer_text() {
  return "No multiplicity adjustment was applied; p-values are exact two-sided Wilcoxon signed-rank.";
}

void AnalysisOptions::validate() const {
  if (b_resamples < 1000) throw ValidationError("b_resamples must be at least 1000");
  if (!(trim >= 0.0 && trim < 0.5)) throw ValidationError("trim must be in [0, 0.5)");
  if (task_resamples < 1) throw ValidationError("task_resamples must be positive");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must be in (0, 1)");
  thresholds.validate();
}

std::vector<stats::SubjectPair> aggregate_subjects(const std::vector<session::SummaryRow>& rows,
                                                   std::vector<std::string>* dropped) {
  std::map<std::string, std::map<Condition, std::map<TaskKind, std::vector<const session::SummaryRow*>>>> by;
  for (const auto& r : rows) by[r.subject_id][r.condition][r.task].push_back(&r);

  auto collapse = [](const std::map<TaskKind, std::vector<const session::SummaryRow*>>& tasks) {
    stats::ConditionValues v;
    auto level = [&](const std::string& key) {
      std::vector<double> per_task;
      for (const auto& [task, trials] : tasks) {
        std::vector<double> t;
        for (const auto* r : trials) t.push_back(field(*r, key));
        per_task.push_back(median_of(t));
      }
      return median_of(per_task);
    };
    v.ti = level("ti");
    v.rom_deg = level("rom");
    v.reps_per_min = level("reps");
    v.fmed_slope = level("fatigue");
    return v;
  };

  std::vector<stats::SubjectPair> out;
  for (const auto& [id, conds] : by) {
    if (conds.size() != 2) {
      if (dropped) dropped->push_back(id);
      continue;
    }
    out.push_back({id, collapse(conds.at(Condition::baseline)), collapse(conds.at(Condition::assisted))});
  }
  return out;
}

Report build_report(const std::vector<session::SummaryRow>& rows, const AnalysisOptions& options,
                    const TechEndpoints& tech, std::vector<std::string> excluded_sessions) {
  options.validate();
  Report rep;
  rep.options = options;
  rep.tech = tech;
  rep.excluded_sessions = std::move(excluded_sessions);
  rep.subjects = aggregate_subjects(rows, &rep.dropped_subjects);
  const auto n = static_cast<Eigen::Index>(rep.subjects.size());
  if (n < 3) throw InsufficientDataError("analysis needs at least 3 subjects with both conditions, have " +
                                         std::to_string(n));
  rep.n_subjects = static_cast<int>(n);

  std::uint64_t k = 0;
  for (const auto& def : kOutcomes) {
    OutcomeRow row;
    row.key = def.key;
    row.label = def.label;
    row.unit = def.unit;
    row.delta_unit = def.delta_unit;
    row.has_levels = def.has_levels;

    Vec base(n), assist(n), delta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      base[i] = field(rep.subjects[static_cast<std::size_t>(i)].baseline, row.key);
      assist[i] = field(rep.subjects[static_cast<std::size_t>(i)].assisted, row.key);
      delta[i] = assist[i] - base[i];
      if (row.key == "rom") {
        if (!(base[i] > 0.0)) throw InsufficientDataError("baseline ROM must be positive for a percent gain");
        delta[i] = 100.0 * delta[i] / base[i];
      }
    }
    const auto bq = stats::iqr(base), aq = stats::iqr(assist);
    row.baseline_median = stats::median(base);
    row.baseline_q1 = bq.q1;
    row.baseline_q3 = bq.q3;
    row.assisted_median = stats::median(assist);
    row.assisted_q1 = aq.q1;
    row.assisted_q3 = aq.q3;

    const auto ci = stats::bca_ci(delta, stats::median_statistic, options.b_resamples, options.seed + k, options.level);
    row.delta = ci.estimate;
    row.ci_low = ci.low;
    row.ci_high = ci.high;
    const auto w = stats::wilcoxon_exact(delta);
    row.p_value = w.p_value;
    row.w_plus = w.w_plus;
    row.cliffs_delta = stats::cliffs_delta_signed(delta);
    if (std::abs(row.cliffs_delta) >= 0.8) row.effect_label = "paired sign: large effect";
    const auto tm = stats::trimmed_mean(delta, options.trim);
    row.trimmed_mean = tm.value;
    row.trimmed_fell_back = tm.fell_back;

    std::vector<stats::TrialValue> trials;
    for (const auto& r : rows) trials.push_back({r.subject_id, r.task, r.condition, field(r, row.key)});
    row.task_sign_consistency =
        stats::task_resample_sensitivity(trials, options.task_resamples, options.seed + 100 + k).sign_consistency;

    rep.outcomes.push_back(row);
    ++k;
  }
  const auto& rom = rep.outcomes[1];
  rep.rom_median_ratio_pct = 100.0 * (rom.assisted_median / rom.baseline_median - 1.0);
  rep.responders = stats::responder_table(rep.subjects, options.thresholds);
  return rep;
}

ordered_json to_json(const Report& r) {
  ordered_json j;
  j["n_subjects"] = r.n_subjects;
  j["excluded_sessions"] = r.excluded_sessions;
  j["dropped_subjects"] = r.dropped_subjects;
  j["options"] = {{"b_resamples", r.options.b_resamples},
                  {"seed", r.options.seed},
                  {"trim", r.options.trim},
                  {"task_resamples", r.options.task_resamples},
                  {"level", r.options.level},
                  {"thresholds",
                   {{"ti", r.options.thresholds.ti_max},
                    {"rom", r.options.thresholds.rom_gain_deg},
                    {"reps", r.options.thresholds.reps_gain_per_min}}}};
  ordered_json outs = ordered_json::array();
  for (const auto& o : r.outcomes) {
    outs.push_back({{"key", o.key},
                    {"label", o.label},
                    {"unit", o.unit},
                    {"delta_unit", o.delta_unit},
                    {"has_levels", o.has_levels},
                    {"baseline", {{"median", o.baseline_median}, {"q1", o.baseline_q1}, {"q3", o.baseline_q3}}},
                    {"assisted", {{"median", o.assisted_median}, {"q1", o.assisted_q1}, {"q3", o.assisted_q3}}},
                    {"delta", o.delta},
                    {"ci_low", o.ci_low},
                    {"ci_high", o.ci_high},
                    {"p_value", o.p_value},
                    {"w_plus", o.w_plus},
                    {"cliffs_delta", o.cliffs_delta},
                    {"effect_label", o.effect_label},
                    {"trimmed_mean", o.trimmed_mean},
                    {"trimmed_fell_back", o.trimmed_fell_back},
                    {"task_sign_consistency", o.task_sign_consistency}});
  }
  j["outcomes"] = outs;
  j["rom_median_ratio_pct"] = r.rom_median_ratio_pct;
  ordered_json resp = ordered_json::array();
  for (const auto& row : r.responders)
    resp.push_back({{"criterion", row.criterion}, {"count", row.count}, {"n", row.n}, {"fraction", row.fraction}});
  j["responders"] = resp;
  j["technical"] = {{"sessions", r.tech.sessions},
                    {"completed_sessions", r.tech.completed_sessions},
                    {"loop_rate_hz", r.tech.loop_rate_hz},
                    {"median_latency_ms", r.tech.median_latency_ms},
                    {"p95_latency_ms", r.tech.p95_latency_ms},
                    {"missed_deadlines", r.tech.missed_deadlines},
                    {"safety_interventions", r.tech.safety_interventions},
                    {"stall_cuts", r.tech.stall_cuts},
                    {"adverse_events", r.tech.adverse_events}};
  ordered_json subj = ordered_json::array();
  auto cv = [](const stats::ConditionValues& v) {
    return ordered_json{{"ti", v.ti}, {"rom_deg", v.rom_deg}, {"reps_per_min", v.reps_per_min}, {"fmed_slope", v.fmed_slope}};
  };
  for (const auto& s : r.subjects)
    subj.push_back({{"subject_id", s.id}, {"baseline", cv(s.baseline)}, {"assisted", cv(s.assisted)}});
  j["subjects"] = subj;
  j["footer"] = footer_text();
  return j;
}

Report report_from_json(const ordered_json& j) {
  try {
    Report r;
    r.n_subjects = j.at("n_subjects").get<int>();
    r.excluded_sessions = j.at("excluded_sessions").get<std::vector<std::string>>();
    r.dropped_subjects = j.at("dropped_subjects").get<std::vector<std::string>>();
    const auto& op = j.at("options");
    r.options.b_resamples = op.at("b_resamples").get<int>();
    r.options.seed = op.at("seed").get<std::uint64_t>();
    r.options.trim = op.at("trim").get<double>();
    r.options.task_resamples = op.at("task_resamples").get<int>();
    r.options.level = op.at("level").get<double>();
    r.options.thresholds.ti_max = op.at("thresholds").at("ti").get<double>();
    r.options.thresholds.rom_gain_deg = op.at("thresholds").at("rom").get<double>();
    r.options.thresholds.reps_gain_per_min = op.at("thresholds").at("reps").get<double>();
    for (const auto& o : j.at("outcomes")) {
      OutcomeRow row;
      row.key = o.at("key").get<std::string>();
      row.label = o.at("label").get<std::string>();
      row.unit = o.at("unit").get<std::string>();
      row.delta_unit = o.at("delta_unit").get<std::string>();
      row.has_levels = o.at("has_levels").get<bool>();
      row.baseline_median = o.at("baseline").at("median").get<double>();
      row.baseline_q1 = o.at("baseline").at("q1").get<double>();
      row.baseline_q3 = o.at("baseline").at("q3").get<double>();
      row.assisted_median = o.at("assisted").at("median").get<double>();
      row.assisted_q1 = o.at("assisted").at("q1").get<double>();
      row.assisted_q3 = o.at("assisted").at("q3").get<double>();
      row.delta = o.at("delta").get<double>();
      row.ci_low = o.at("ci_low").get<double>();
      row.ci_high = o.at("ci_high").get<double>();
      row.p_value = o.at("p_value").get<double>();
      row.w_plus = o.at("w_plus").get<double>();
      row.cliffs_delta = o.at("cliffs_delta").get<double>();
      row.effect_label = o.at("effect_label").get<std::string>();
      row.trimmed_mean = o.at("trimmed_mean").get<double>();
      row.trimmed_fell_back = o.at("trimmed_fell_back").get<bool>();
      row.task_sign_consistency = o.at("task_sign_consistency").get<double>();
      r.outcomes.push_back(row);
    }
    r.rom_median_ratio_pct = j.at("rom_median_ratio_pct").get<double>();
    for (const auto& x : j.at("responders"))
      r.responders.push_back({x.at("criterion").get<std::string>(), x.at("count").get<int>(), x.at("n").get<int>(),
                              x.at("fraction").get<double>()});
    const auto& t = j.at("technical");
    r.tech.sessions = t.at("sessions").get<std::size_t>();
    r.tech.completed_sessions = t.at("completed_sessions").get<std::size_t>();
    r.tech.loop_rate_hz = t.at("loop_rate_hz").get<double>();
    r.tech.median_latency_ms = t.at("median_latency_ms").get<double>();
    r.tech.p95_latency_ms = t.at("p95_latency_ms").get<double>();
    r.tech.missed_deadlines = t.at("missed_deadlines").get<std::size_t>();
    r.tech.safety_interventions = t.at("safety_interventions").get<std::size_t>();
    r.tech.stall_cuts = t.at("stall_cuts").get<std::size_t>();
    r.tech.adverse_events = t.at("adverse_events").get<int>();
    auto cv = [](const ordered_json& v) {
      return stats::ConditionValues{v.at("ti").get<double>(), v.at("rom_deg").get<double>(),
                                    v.at("reps_per_min").get<double>(), v.at("fmed_slope").get<double>()};
    };
    for (const auto& s : j.at("subjects"))
      r.subjects.push_back({s.at("subject_id").get<std::string>(), cv(s.at("baseline")), cv(s.at("assisted"))});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report JSON: ") + e.what());
  }
}

std::string render_text(const Report& r) {
  std::ostringstream out;
  const char* level_fmt = "%.3f [%.3f, %.3f]";
  out << "Subject-level outcomes (n = " << r.n_subjects << ")\n";
  out << fmt("%-24s %-26s %-26s %-30s %-8s %s\n", "Outcome", "Baseline median [IQR]", "Assisted median [IQR]",
             "Change [95% BCa CI]", "p", "Cliff's delta");
  for (const auto& o : r.outcomes) {
    const std::string name = o.unit.empty() ? o.label : o.label + " (" + o.unit + ")";
    const std::string b = o.has_levels ? fmt(level_fmt, o.baseline_median, o.baseline_q1, o.baseline_q3) : "--";
    const std::string a = o.has_levels ? fmt(level_fmt, o.assisted_median, o.assisted_q1, o.assisted_q3) : "--";
    const std::string d = fmt("%+.3f%s [%+.3f, %+.3f]", o.delta, o.delta_unit.c_str(), o.ci_low, o.ci_high);
    std::string delta = fmt("%+.2f", o.cliffs_delta);
    if (!o.effect_label.empty()) delta += " (" + o.effect_label + ")";
    out << fmt("%-24s %-26s %-26s %-30s %-8.4f %s\n", name.c_str(), b.c_str(), a.c_str(), d.c_str(), o.p_value,
               delta.c_str());
  }
  out << fmt("ROM gain from cohort medians: %+.2f%%\n", r.rom_median_ratio_pct);

  out << "\nSensitivity\n";
  out << fmt("%-24s %-22s %s\n", "Outcome", "Trimmed mean change", "Task-resample sign consistency");
  for (const auto& o : r.outcomes) {
    std::string tm = fmt("%+.3f%s", o.trimmed_mean, o.delta_unit.c_str());
    if (o.trimmed_fell_back) tm += " (untrimmed)";
    out << fmt("%-24s %-22s %.3f\n", o.label.c_str(), tm.c_str(), o.task_sign_consistency);
  }

  out << "\nResponders\n";
  for (const auto& row : r.responders)
    out << fmt("%-24s %d / %d  %.1f%%\n", row.criterion.c_str(), row.count, row.n, 100.0 * row.fraction);

  out << "\nTechnical endpoints\n";
  out << fmt("loop rate %.1f Hz, median latency %.3f ms, p95 latency %.3f ms\n", r.tech.loop_rate_hz,
             r.tech.median_latency_ms, r.tech.p95_latency_ms);
  out << fmt("completed sessions %zu / %zu, missed deadlines %zu, safety interventions %zu, stall cuts %zu\n",
             r.tech.completed_sessions, r.tech.sessions, r.tech.missed_deadlines, r.tech.safety_interventions,
             r.tech.stall_cuts);
  out << "device-related adverse events " << r.tech.adverse_events << "\n";

  out << "\nExcluded sessions: ";
  if (r.excluded_sessions.empty()) out << "none";
  for (std::size_t i = 0; i < r.excluded_sessions.size(); ++i) out << (i ? "; " : "") << r.excluded_sessions[i];
  out << "\nSubjects without both conditions: ";
  if (r.dropped_subjects.empty()) out << "none";
  for (std::size_t i = 0; i < r.dropped_subjects.size(); ++i) out << (i ? ", " : "") << r.dropped_subjects[i];
  out << fmt("\nBootstrap: B = %d, seed = %llu, level %.2f; trim %.2f\n", r.options.b_resamples,
             static_cast<unsigned long long>(r.options.seed), r.options.level, r.options.trim);
  out << "\n" << footer_text() << "\n";
  return out.str();
}

}  // namespace armassist::report
