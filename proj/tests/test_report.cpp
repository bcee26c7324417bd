#include <doctest.h>

#include "armassist/errors.hpp"
#include "armassist/report.hpp"
#include "oracles.hpp"

using namespace armassist;
using namespace armassist::report;
using session::SummaryRow;

namespace {

// Twelve subjects, three tasks each. Values differ by task so the per-task
// median then median-over-tasks rule matters.
std::vector<SummaryRow> cohort_rows(int n = 12) {
  std::vector<SummaryRow> rows;
  for (int s = 0; s < n; ++s) {
    const std::string id = (s < 9 ? "S0" : "S") + std::to_string(s + 1);
    int t = 0;
    for (TaskKind task : all_task_kinds()) {
      const double k = s + 0.1 * t++;
      rows.push_back({id, task, Condition::baseline, 0.44 + 0.002 * k, 80.0 + k, 10.0 + 0.05 * k, -0.45 + 0.01 * k});
      rows.push_back({id, task, Condition::assisted, 0.35 + 0.003 * k, 90.0 + 1.1 * k, 13.0 + 0.04 * k, -0.35 + 0.011 * k});
    }
  }
  return rows;
}

AnalysisOptions fast_options() {
  AnalysisOptions o;
  o.b_resamples = 1000;
  o.task_resamples = 50;
  return o;
}

const OutcomeRow& row(const Report& r, const std::string& key) {
  for (const auto& o : r.outcomes)
    if (o.key == key) return o;
  throw std::runtime_error("no row " + key);
}

}  // namespace

TEST_CASE("subject aggregation takes task medians then their median") {
  auto rows = cohort_rows(3);
  rows.push_back({"S01", TaskKind::push_extend, Condition::baseline, 0.9, 100.0, 20.0, 0.0});  // second trial
  rows.push_back({"S99", TaskKind::push_extend, Condition::baseline, 0.4, 80.0, 10.0, -0.4});
  std::vector<std::string> dropped;
  const auto subjects = aggregate_subjects(rows, &dropped);
  REQUIRE(subjects.size() == 3);
  CHECK(dropped == std::vector<std::string>{"S99"});
  // S01 push_extend baseline TI: median of {0.44, 0.9}; other tasks 0.4402, 0.4404.
  const double task0 = 0.5 * (0.44 + 0.9);
  CHECK(subjects[0].baseline.ti == doctest::Approx(oracle::sorted_median({task0, 0.4402, 0.4404})));
  CHECK(subjects[1].assisted.rom_deg == doctest::Approx(90.0 + 1.1 * 1.1));
}

TEST_CASE("outcome rows follow independent computations") {
  const auto rows = cohort_rows();
  const auto r = build_report(rows, fast_options());
  CHECK(r.n_subjects == 12);
  REQUIRE(r.outcomes.size() == 4);
  REQUIRE(r.responders.size() == 3);

  std::vector<double> dti, drom_pct, dreps, dslope, base_ti;
  for (const auto& s : r.subjects) {
    dti.push_back(s.assisted.ti - s.baseline.ti);
    drom_pct.push_back(100.0 * (s.assisted.rom_deg - s.baseline.rom_deg) / s.baseline.rom_deg);
    dreps.push_back(s.assisted.reps_per_min - s.baseline.reps_per_min);
    dslope.push_back(s.assisted.fmed_slope - s.baseline.fmed_slope);
    base_ti.push_back(s.baseline.ti);
  }
  const auto& ti = row(r, "ti");
  CHECK(ti.delta == doctest::Approx(oracle::sorted_median(dti)));
  CHECK(ti.baseline_median == doctest::Approx(oracle::sorted_median(base_ti)));
  CHECK(ti.p_value == doctest::Approx(oracle::wilcoxon_bruteforce(dti)));
  CHECK(ti.cliffs_delta == doctest::Approx(-1.0));
  CHECK(ti.effect_label == "paired sign: large effect");
  CHECK(ti.ci_low <= ti.delta);
  CHECK(ti.delta <= ti.ci_high);
  CHECK(ti.trimmed_mean == doctest::Approx(oracle::trimmed_mean_sort_slice(dti, 0.2)));

  CHECK(row(r, "rom").delta == doctest::Approx(oracle::sorted_median(drom_pct)));
  CHECK(row(r, "rom").delta_unit == "%");
  CHECK(row(r, "reps").delta == doctest::Approx(oracle::sorted_median(dreps)));
  CHECK(row(r, "fatigue").delta == doctest::Approx(oracle::sorted_median(dslope)));
  CHECK_FALSE(row(r, "fatigue").has_levels);
  CHECK(row(r, "reps").task_sign_consistency == 1.0);
  CHECK(r.rom_median_ratio_pct ==
        doctest::Approx(100.0 * (row(r, "rom").assisted_median / row(r, "rom").baseline_median - 1.0)));
}

TEST_CASE("report analysis is seeded") {
  const auto rows = cohort_rows();
  const auto a = to_json(build_report(rows, fast_options())).dump();
  CHECK(to_json(build_report(rows, fast_options())).dump() == a);
  auto other = fast_options();
  other.seed += 1;
  CHECK(to_json(build_report(rows, other)).dump() != a);
}

TEST_CASE("JSON round-trip reproduces text and JSON exactly") {
  TechEndpoints tech;
  tech.sessions = 72;
  tech.completed_sessions = 72;
  tech.loop_rate_hz = 100.0;
  tech.median_latency_ms = 0.031;
  tech.p95_latency_ms = 0.052;
  const auto r = build_report(cohort_rows(), fast_options(), tech, {"S03/pinch_grip_assisted_t0"});
  const auto j = to_json(r);
  const auto back = report_from_json(j);
  CHECK(to_json(back).dump() == j.dump());
  CHECK(render_text(back) == render_text(r));
  CHECK(back.excluded_sessions == std::vector<std::string>{"S03/pinch_grip_assisted_t0"});
  CHECK(j.at("technical").at("median_latency_ms") == 0.031);
}

TEST_CASE("rendered text carries all rows and the footer") {
  const auto text = render_text(build_report(cohort_rows(), fast_options()));
  for (const auto* needle : {"Tremor index", "ROM (deg)", "Reps (/min)", "EMG fmed slope", "Responders", footer_text()})
    CHECK(text.find(needle) != std::string::npos);
}

TEST_CASE("report input errors") {
  CHECK_THROWS_AS(build_report({}, fast_options()), InsufficientDataError);
  CHECK_THROWS_AS(build_report(cohort_rows(2), fast_options()), InsufficientDataError);
  auto bad = fast_options();
  bad.b_resamples = 10;
  CHECK_THROWS_AS(build_report(cohort_rows(), bad), ValidationError);
  auto j = to_json(build_report(cohort_rows(), fast_options()));
  j.erase("outcomes");
  CHECK_THROWS_AS(report_from_json(j), ValidationError);
  CHECK_THROWS_AS(report_from_json(ordered_json::array()), ValidationError);
}
